//! Cleartext reference interpreters over the field.
//!
//! [`interpret`] walks a lowered [`CircuitGraph`] block by block, one
//! node at a time. [`ir::interpret_ir`] runs the raw IR with the native
//! meaning of each instruction, so the two can be compared to check the
//! lowering.

pub mod ir;

pub use ir::{interpret_ir, IrEvalError};

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};

use crate::demand::{block_demand, Demand};
use crate::field::{Fp, P};
use crate::graph::{CircuitGraph, NodeId, NodeKind};
use crate::linear::LinearError;

/// Default cap on block entries.
pub const DEFAULT_STEP_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("no more than {cap} block entries allowed; the program does not terminate in time")]
    NonTerminating { cap: u64 },
    #[error("missing value for input {0}")]
    MissingInput(String),
    #[error("input {name} has {got} elements, expected {expected}")]
    ShapeMismatch { name: String, expected: u64, got: usize },
    #[error("load {node} reads [{start}, {end}) of a {len}-element input")]
    LoadOutOfBounds { node: NodeId, start: u64, end: u64, len: usize },
    #[error("phi {phi} has no incoming value for the actual predecessor")]
    UnknownPredecessor { phi: NodeId },
    #[error("node {node}: operands have {left} and {right} lanes")]
    LaneMismatch { node: NodeId, left: usize, right: usize },
}

/// Outcome of a sequential run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleRun {
    /// Value of the root's operand, empty when the function returns nothing.
    pub output: Vec<Fp>,
    /// Block entries `(label, visit)` in order.
    pub path: Vec<(NodeId, u32)>,
}

impl OracleRun {
    /// Triples consumed along the path, in reservation order.
    pub fn demand(&self, g: &CircuitGraph, slice: u64) -> Result<Demand, LinearError> {
        let mut memo: HashMap<NodeId, Demand> = HashMap::new();
        let mut d = Demand::default();
        for &(label, _) in &self.path {
            if let Entry::Vacant(e) = memo.entry(label) {
                e.insert(block_demand(g, label, slice)?);
            }
            d.add(memo[&label].clone());
        }
        Ok(d)
    }

    /// Number of entries into each block.
    pub fn visits(&self) -> BTreeMap<NodeId, u32> {
        let mut m = BTreeMap::new();
        for &(l, v) in &self.path {
            m.insert(l, v);
        }
        m
    }
}

/// Checks `inputs` against the graph's descriptors and orders them by
/// parameter.
pub fn bind_inputs(g: &CircuitGraph, inputs: &BTreeMap<String, Vec<Fp>>) -> Result<Vec<Vec<Fp>>, OracleError> {
    g.inputs
        .iter()
        .map(|d| {
            let v = inputs.get(&d.name).ok_or_else(|| OracleError::MissingInput(d.name.clone()))?;
            if v.len() as u64 != d.len {
                return Err(OracleError::ShapeMismatch { name: d.name.clone(), expected: d.len, got: v.len() });
            }
            Ok(v.clone())
        })
        .collect()
}

pub fn interpret(g: &CircuitGraph, inputs: &BTreeMap<String, Vec<Fp>>) -> Result<OracleRun, OracleError> {
    interpret_capped(g, inputs, DEFAULT_STEP_CAP)
}

pub fn interpret_capped(g: &CircuitGraph, inputs: &BTreeMap<String, Vec<Fp>>, cap: u64) -> Result<OracleRun, OracleError> {
    let bound = bind_inputs(g, inputs)?;
    let mut vals: Vec<Option<Vec<Fp>>> = vec![None; g.len()];
    for (d, v) in g.inputs.iter().zip(bound) {
        vals[d.node as usize] = Some(v);
    }
    for n in &g.nodes {
        if let NodeKind::Const { values } = &n.kind {
            vals[n.id as usize] = Some(values.clone());
        }
    }
    let mut visits: HashMap<NodeId, u32> = HashMap::new();
    let mut path = Vec::new();
    let mut cur = g.entry;
    let mut pred: Option<NodeId> = None;
    let mut output = None;
    while output.is_none() {
        if path.len() as u64 >= cap {
            return Err(OracleError::NonTerminating { cap });
        }
        let v = visits.entry(cur).or_insert(0);
        *v += 1;
        path.push((cur, *v));
        let nodes = g.block_nodes(cur);
        // phis read the values live on the incoming edge, all at once
        let mut phi_vals = Vec::new();
        for &u in &nodes {
            if let NodeKind::Phi { incoming } = &g.node(u).kind {
                let src = incoming.iter().find(|(l, _)| Some(*l) == pred).ok_or(OracleError::UnknownPredecessor { phi: u })?.1;
                phi_vals.push((u, vals[src as usize].clone().expect("phi source evaluated")));
            }
        }
        for (u, v) in phi_vals {
            vals[u as usize] = Some(v);
        }
        let mut next = None;
        for &u in &nodes {
            let node = g.node(u);
            let arg = |k: usize| vals[node.operands[k] as usize].as_deref().expect("operand evaluated");
            let out = match &node.kind {
                NodeKind::Phi { .. } => continue,
                NodeKind::Branch { targets } => {
                    next = Some(if targets.len() == 1 {
                        targets[0]
                    } else if arg(0)[0].is_zero() {
                        targets[1]
                    } else {
                        targets[0]
                    });
                    continue;
                }
                NodeKind::Root => {
                    output = Some(if node.operands.is_empty() { Vec::new() } else { arg(0).to_vec() });
                    continue;
                }
                NodeKind::Adder | NodeKind::AddBatch => zip(u, arg(0), arg(1), |a, b| a + b)?,
                NodeKind::Subtract | NodeKind::SubBatch => zip(u, arg(0), arg(1), |a, b| a - b)?,
                NodeKind::Multiplier | NodeKind::MultBatch => zip(u, arg(0), arg(1), |a, b| a * b)?,
                NodeKind::ReduceAdd => vec![arg(0).iter().fold(Fp::ZERO, |s, &x| s + x)],
                NodeKind::ReduceMul => vec![arg(0).iter().fold(Fp::ONE, |s, &x| s * x)],
                NodeKind::Compare { pred } => zip(u, arg(0), arg(1), |a, b| if pred.eval(a.signed(), b.signed()) { Fp::ONE } else { Fp::ZERO })?,
                NodeKind::Load => {
                    let base = arg(0);
                    let start = arg(1)[0].value() as u64;
                    let end = start + node.lanes as u64;
                    if end > base.len() as u64 {
                        return Err(OracleError::LoadOutOfBounds { node: u, start, end, len: base.len() });
                    }
                    base[start as usize..end as usize].to_vec()
                }
                NodeKind::LinearLayer { din, dout } => matvec(arg(1), arg(0), arg(2), *din as usize, *dout as usize),
                NodeKind::Input { .. } | NodeKind::Const { .. } | NodeKind::BlockLabel { .. } => continue,
            };
            vals[u as usize] = Some(out);
        }
        if output.is_some() {
            break;
        }
        pred = Some(cur);
        cur = next.expect("every block ends in a branch or the root");
    }
    Ok(OracleRun { output: output.unwrap(), path })
}

fn zip(node: NodeId, a: &[Fp], b: &[Fp], f: impl Fn(Fp, Fp) -> Fp) -> Result<Vec<Fp>, OracleError> {
    if a.len() != b.len() {
        return Err(OracleError::LaneMismatch { node, left: a.len(), right: b.len() });
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
}

/// Dense `W x + b` with `W` row-major `dout x din`.
pub fn matvec(w: &[Fp], x: &[Fp], b: &[Fp], din: usize, dout: usize) -> Vec<Fp> {
    (0..dout)
        .map(|r| {
            let acc = w[r * din..(r + 1) * din].iter().zip(x).fold(0u128, |s, (a, c)| s + a.value() as u128 * c.value() as u128);
            Fp::from_u64((acc % P as u128) as u64) + b[r]
        })
        .collect()
}
