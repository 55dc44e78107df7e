//! Execution traces and an offline validator that replays them against
//! the graph.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::FINISHED;
use crate::graph::{CircuitGraph, NodeId, NodeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Issue,
    Complete,
    BranchTaken,
    BranchStalled,
    BlockEnter,
    EpochAdvance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ns: u64,
    pub worker: u32,
    pub event: TraceKind,
    pub node: NodeId,
    pub epoch: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceViolation {
    #[error("event {at}: node {node} issued before operand {operand} completed")]
    OperandNotReady { at: usize, node: NodeId, operand: NodeId },
    #[error("event {at}: node {node} issued outside an entered block")]
    BlockNotEntered { at: usize, node: NodeId },
    #[error("event {at}: node {node} issued while already done or in flight")]
    DoubleIssue { at: usize, node: NodeId },
    #[error("event {at}: node {node} completed without being issued")]
    CompleteWithoutIssue { at: usize, node: NodeId },
    #[error("event {at}: branch {node} taken before its condition completed")]
    BranchNotReady { at: usize, node: NodeId },
    #[error("loop {header}: epoch sequence {seq:?} is not 1,2,..,k,FINISHED")]
    EpochSequence { header: NodeId, seq: Vec<u32> },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceSummary {
    pub issued: BTreeSet<NodeId>,
    pub entered: BTreeSet<NodeId>,
    pub epochs: BTreeMap<NodeId, Vec<u32>>,
}

/// Checks that no compute node was issued before its operands completed
/// and its block was entered, and that each loop's epochs ran
/// `1, 2, .., k, FINISHED` for every activation.
pub fn validate_trace(g: &CircuitGraph, events: &[TraceEvent]) -> Result<TraceSummary, TraceViolation> {
    let n = g.len();
    let mut done: Vec<bool> = g.nodes.iter().map(|x| x.kind.is_leaf()).collect();
    let mut in_flight = vec![false; n];
    let mut entered: HashSet<NodeId> = HashSet::new();
    let mut summary = TraceSummary::default();
    for (at, ev) in events.iter().enumerate() {
        let u = ev.node;
        let node = g.node(u);
        match ev.event {
            TraceKind::BlockEnter => {
                if let Some(info) = g.loops.get(&u) {
                    for &b in &info.members {
                        for x in g.block_nodes(b) {
                            done[x as usize] = false;
                        }
                        if b != u {
                            entered.remove(&b);
                        }
                    }
                }
                entered.insert(u);
                summary.entered.insert(u);
            }
            TraceKind::Issue => {
                if !node.block.is_some_and(|b| entered.contains(&b)) {
                    return Err(TraceViolation::BlockNotEntered { at, node: u });
                }
                if done[u as usize] || in_flight[u as usize] {
                    return Err(TraceViolation::DoubleIssue { at, node: u });
                }
                if let Some(&o) = node.operands.iter().find(|&&o| !done[o as usize]) {
                    return Err(TraceViolation::OperandNotReady { at, node: u, operand: o });
                }
                in_flight[u as usize] = true;
                summary.issued.insert(u);
            }
            TraceKind::Complete => {
                let is_phi = matches!(node.kind, NodeKind::Phi { .. });
                if is_phi {
                    if !node.block.is_some_and(|b| entered.contains(&b)) {
                        return Err(TraceViolation::BlockNotEntered { at, node: u });
                    }
                } else if !std::mem::replace(&mut in_flight[u as usize], false) {
                    return Err(TraceViolation::CompleteWithoutIssue { at, node: u });
                }
                done[u as usize] = true;
            }
            TraceKind::BranchTaken => {
                if !node.block.is_some_and(|b| entered.contains(&b)) {
                    return Err(TraceViolation::BlockNotEntered { at, node: u });
                }
                if node.operands.iter().any(|&o| !done[o as usize]) {
                    return Err(TraceViolation::BranchNotReady { at, node: u });
                }
            }
            TraceKind::EpochAdvance => summary.epochs.entry(u).or_default().push(ev.epoch),
            TraceKind::BranchStalled => {}
        }
    }
    for (&header, seq) in &summary.epochs {
        let mut expect = 1;
        let mut ok = true;
        for &e in seq {
            if e == FINISHED && expect > 1 {
                expect = 1;
            } else if e == expect {
                expect += 1;
            } else {
                ok = false;
                break;
            }
        }
        if !ok || expect != 1 {
            return Err(TraceViolation::EpochSequence { header, seq: seq.clone() });
        }
    }
    Ok(summary)
}

/// Newline-delimited JSON rendering of a trace.
pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("trace event serializes"));
        s.push('\n');
    }
    s
}
