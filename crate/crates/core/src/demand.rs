//! Preprocessing demand: how many scalar and matrix triples nodes consume.
//!
//! Privacy here is the compile-time privacy of the graph. The runtime
//! promotes public values flowing into private nodes so that what it
//! consumes always matches these counts.

use crate::graph::{CircuitGraph, NodeId, NodeKind};
use crate::linear::{layer_demand, plan_tiles, LinearError};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Demand {
    pub scalar: usize,
    /// Matrix triple shapes `(rows, cols)` in consumption order.
    pub matrix: Vec<(u32, u32)>,
}

impl Demand {
    pub fn add(&mut self, other: Demand) {
        self.scalar += other.scalar;
        self.matrix.extend(other.matrix);
    }
}

fn private(g: &CircuitGraph, id: NodeId) -> bool {
    g.node(id).privacy.is_private()
}

/// Triples one execution of `id` consumes.
pub fn node_demand(g: &CircuitGraph, id: NodeId, slice: u64) -> Result<Demand, LinearError> {
    let node = g.node(id);
    let ops = &node.operands;
    Ok(match &node.kind {
        NodeKind::Multiplier | NodeKind::MultBatch if private(g, ops[0]) && private(g, ops[1]) => {
            Demand { scalar: node.lanes as usize, matrix: Vec::new() }
        }
        NodeKind::ReduceMul if private(g, ops[0]) => {
            Demand { scalar: (g.node(ops[0]).lanes as usize).saturating_sub(1), matrix: Vec::new() }
        }
        NodeKind::LinearLayer { din, dout } => {
            let plan = plan_tiles(*din, *dout, slice)?;
            Demand { scalar: 0, matrix: layer_demand(&plan, private(g, ops[1]), private(g, ops[0])) }
        }
        _ => Demand::default(),
    })
}

/// Demand of one visit to `label`, in chain order.
pub fn block_demand(g: &CircuitGraph, label: NodeId, slice: u64) -> Result<Demand, LinearError> {
    let mut d = Demand::default();
    for u in g.block_nodes(label) {
        d.add(node_demand(g, u, slice)?);
    }
    Ok(d)
}

/// Demand that every complete run incurs: blocks dominating the root
/// outside any loop. Exact for straight-line circuits.
pub fn static_demand(g: &CircuitGraph, slice: u64) -> Result<Demand, LinearError> {
    let mut d = Demand::default();
    for b in g.must_run_blocks() {
        d.add(block_demand(g, b, slice)?);
    }
    Ok(d)
}
