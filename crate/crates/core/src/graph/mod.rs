//! The MPC circuit: data-flow nodes, block labels, loop metadata and the
//! constant pool, as handed from the compiler to the runtime.

mod build;
mod loops;
mod serialize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::field::Fp;
use crate::ir::{Predicate, Privacy};

pub use build::{build_graph, BuildError, BuildOptions};
pub use serialize::{deserialize_circuit, serialize_circuit, CircuitFileError, FORMAT_VERSION, MAGIC};

pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NodeKind {
    Input { param: u32 },
    Const { values: Vec<Fp> },
    Adder,
    Multiplier,
    Subtract,
    AddBatch,
    MultBatch,
    SubBatch,
    ReduceAdd,
    ReduceMul,
    /// Operands are `[base, start]`; the element count is the node's lanes.
    Load,
    /// Operands are `[x, W, b]`.
    LinearLayer { din: u32, dout: u32 },
    /// Comparison of two public values, producing 0 or 1.
    Compare { pred: Predicate },
    /// `(predecessor label, value)` pairs.
    Phi { incoming: Vec<(NodeId, NodeId)> },
    /// One target (unconditional) or two (`[if_true, if_false]`, with the
    /// condition as the only operand).
    Branch { targets: Vec<NodeId> },
    BlockLabel { name: String },
    Root,
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Input { .. } => "Input",
            NodeKind::Const { .. } => "Const",
            NodeKind::Adder => "Adder",
            NodeKind::Multiplier => "Multiplier",
            NodeKind::Subtract => "Subtract",
            NodeKind::AddBatch => "AddBatch",
            NodeKind::MultBatch => "MultBatch",
            NodeKind::SubBatch => "SubBatch",
            NodeKind::ReduceAdd => "ReduceAdd",
            NodeKind::ReduceMul => "ReduceMul",
            NodeKind::Load => "Load",
            NodeKind::LinearLayer { .. } => "LinearLayer",
            NodeKind::Compare { .. } => "Compare",
            NodeKind::Phi { .. } => "Phi",
            NodeKind::Branch { .. } => "Branch",
            NodeKind::BlockLabel { .. } => "BlockLabel",
            NodeKind::Root => "Root",
        }
    }

    /// Multiplication-like work that goes to the heavy queue.
    pub fn is_heavy(&self) -> bool {
        matches!(self, NodeKind::Multiplier | NodeKind::MultBatch | NodeKind::ReduceMul | NodeKind::LinearLayer { .. })
    }

    /// Nodes the back end executes (everything except leaves, labels,
    /// branches and phis).
    pub fn is_compute(&self) -> bool {
        !matches!(
            self,
            NodeKind::Input { .. }
                | NodeKind::Const { .. }
                | NodeKind::Phi { .. }
                | NodeKind::Branch { .. }
                | NodeKind::BlockLabel { .. }
        )
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Input { .. } | NodeKind::Const { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(flatten)]
    pub kind: NodeKind,
    pub lanes: u32,
    pub operands: Vec<NodeId>,
    /// Owning block label; `None` for inputs, constants and labels.
    pub block: Option<NodeId>,
    pub privacy: Privacy,
    /// Next node of the intra-block chain. For a label this is the chain
    /// leader.
    pub next: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDesc {
    pub name: String,
    pub privacy: Privacy,
    /// Element count (1 for scalar parameters).
    pub len: u64,
    pub node: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopInfo {
    pub header: NodeId,
    /// Member labels, header included, sorted.
    pub members: Vec<NodeId>,
    /// Labels outside the loop reached from a member, sorted.
    pub exits: Vec<NodeId>,
}

impl LoopInfo {
    pub fn contains(&self, label: NodeId) -> bool {
        self.members.binary_search(&label).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitGraph {
    /// Indexed by node id.
    pub nodes: Vec<Node>,
    pub root: NodeId,
    pub entry: NodeId,
    /// Block labels in source order.
    pub labels: Vec<NodeId>,
    pub inputs: Vec<InputDesc>,
    /// Keyed by header label.
    pub loops: BTreeMap<NodeId, LoopInfo>,
    /// Constant values to their interned node.
    #[serde(skip)]
    pub const_pool: BTreeMap<Vec<Fp>, NodeId>,
}

impl CircuitGraph {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn label_name(&self, label: NodeId) -> &str {
        match &self.node(label).kind {
            NodeKind::BlockLabel { name } => name,
            _ => "?",
        }
    }

    pub fn label_by_name(&self, name: &str) -> Option<NodeId> {
        self.labels.iter().copied().find(|&l| self.label_name(l) == name)
    }

    /// Nodes of a block in chain order.
    pub fn block_nodes(&self, label: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.node(label).next;
        while let Some(id) = cur {
            out.push(id);
            cur = self.node(id).next;
        }
        out
    }

    /// The block's terminating node: a Branch or the Root.
    pub fn terminator(&self, label: NodeId) -> Option<NodeId> {
        self.block_nodes(label).last().copied()
    }

    pub fn successors(&self, label: NodeId) -> Vec<NodeId> {
        match self.terminator(label).map(|t| &self.node(t).kind) {
            Some(NodeKind::Branch { targets }) => targets.clone(),
            _ => Vec::new(),
        }
    }

    /// Loops containing `label`, innermost first.
    pub fn enclosing_loops(&self, label: NodeId) -> Vec<NodeId> {
        let mut ls: Vec<&LoopInfo> = self.loops.values().filter(|l| l.contains(label)).collect();
        ls.sort_by_key(|l| l.members.len());
        ls.into_iter().map(|l| l.header).collect()
    }

    pub fn input_by_name(&self, name: &str) -> Option<&InputDesc> {
        self.inputs.iter().find(|i| i.name == name)
    }

    /// Rebuilds the constant pool from the Const nodes.
    pub fn rebuild_const_pool(&mut self) {
        self.const_pool = self
            .nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Const { values } => Some((values.clone(), n.id)),
                _ => None,
            })
            .collect();
    }

    /// Node counts by kind name, sorted by name.
    pub fn kind_histogram(&self) -> BTreeMap<&'static str, usize> {
        let mut h = BTreeMap::new();
        for n in &self.nodes {
            *h.entry(n.kind.name()).or_insert(0) += 1;
        }
        h
    }

    /// Blocks every complete run executes exactly once: those dominating
    /// the root's block and lying outside all loops.
    pub fn must_run_blocks(&self) -> Vec<NodeId> {
        let Some(root_block) = self.node(self.root).block else { return Vec::new() };
        let mut order: Vec<NodeId> = vec![self.entry];
        order.extend(self.labels.iter().copied().filter(|&l| l != self.entry));
        let index: std::collections::HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let succs = order.iter().map(|&l| self.successors(l).iter().map(|t| index[t]).collect()).collect();
        let idom = loops::Cfg::new(succs).idoms();
        order
            .iter()
            .enumerate()
            .filter(|&(i, &l)| {
                idom[i].is_some() && loops::Cfg::dominates(&idom, i, index[&root_block]) && !self.loops.values().any(|lp| lp.contains(l))
            })
            .map(|(_, &l)| l)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes to JSON")
    }
}
