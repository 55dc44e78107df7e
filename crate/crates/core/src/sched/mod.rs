//! Data-and-control readiness scheduler with two ready queues and
//! loop-epoch gating on back edges and loop exits.
//!
//! A node becomes ready when all operands have completed and its block has
//! been entered. Branches are resolved inside [`SchedulerState::next_ready_node`]
//! and never handed to the executor. Entering a loop header re-arms every
//! node of the loop for the next epoch.

mod trace;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use crate::field::Fp;
use crate::graph::{CircuitGraph, NodeId, NodeKind};
use crate::value::Value;

pub use trace::{to_jsonl, validate_trace, TraceEvent, TraceKind, TraceSummary, TraceViolation};

/// Epoch value of a loop that has been exited.
pub const FINISHED: u32 = u32::MAX;

/// Failed attempts after which a branch waits for the next completion.
const STALL_LIMIT: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedError {
    #[error("branch {node} depends on a secret condition")]
    SecretControlFlow { node: NodeId },
    #[error("phi {phi} has no incoming value for predecessor {pred:?}")]
    UnknownPredecessor { phi: NodeId, pred: Option<NodeId> },
    #[error("node {node} completed twice")]
    DoubleCompletion { node: NodeId },
    #[error("node {node} completed without being issued")]
    NotIssued { node: NodeId },
}

/// What a branch condition looks like to the scheduler.
pub trait BranchValue: Clone {
    /// `None` when the value is secret.
    fn branch_condition(&self) -> Option<bool>;
}

impl BranchValue for Value {
    fn branch_condition(&self) -> Option<bool> {
        self.public_values().map(|v| v.first().is_some_and(|x| !x.is_zero()))
    }
}

impl BranchValue for Fp {
    fn branch_condition(&self) -> Option<bool> {
        Some(!self.is_zero())
    }
}

/// A compute node handed to the executor, with its operand values.
#[derive(Clone, Debug)]
pub struct Issue<V> {
    pub id: NodeId,
    pub kind: NodeKind,
    pub operands: Vec<NodeId>,
    pub args: Vec<V>,
    /// How many times the node's block has been entered, counting this one.
    pub visit: u32,
}

#[derive(Clone, Debug, Default)]
pub struct EpochTable {
    pub loop_epoch: BTreeMap<NodeId, u32>,
    pub last_done: BTreeMap<NodeId, HashMap<NodeId, u32>>,
}

impl EpochTable {
    pub fn epoch(&self, header: NodeId) -> u32 {
        self.loop_epoch.get(&header).copied().unwrap_or(0)
    }

    pub fn stamp(&self, header: NodeId, node: NodeId) -> u32 {
        self.last_done.get(&header).and_then(|m| m.get(&node)).copied().unwrap_or(0)
    }
}

pub struct SchedulerState<V> {
    g: Arc<CircuitGraph>,
    consumers: Vec<Vec<NodeId>>,
    phi_users: Vec<Vec<NodeId>>,
    base_unlock: Vec<u32>,
    pending: Vec<u32>,
    done: Vec<bool>,
    queued: Vec<bool>,
    issued: Vec<bool>,
    values: Vec<Option<V>>,
    heavy: VecDeque<NodeId>,
    light: VecDeque<NodeId>,
    entered: Vec<bool>,
    pred: Vec<Option<NodeId>>,
    visits: Vec<u32>,
    phi_sel: Vec<Option<NodeId>>,
    epochs: EpochTable,
    /// Enclosing loop headers per node (by the node's block), innermost first.
    node_loops: Vec<Vec<NodeId>>,
    /// All nodes of each loop's member blocks.
    loop_nodes: BTreeMap<NodeId, Vec<NodeId>>,
    streak: Vec<u32>,
    parked: Vec<NodeId>,
    entries: Vec<(NodeId, u32)>,
    finished: bool,
    started: bool,
    trace: Option<(Instant, Vec<TraceEvent>)>,
    worker: u32,
}

impl<V: BranchValue> SchedulerState<V> {
    pub fn new(g: Arc<CircuitGraph>, trace: bool) -> Self {
        let n = g.len();
        let mut consumers = vec![Vec::new(); n];
        let mut phi_users: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut base_unlock = vec![0; n];
        for node in &g.nodes {
            match &node.kind {
                NodeKind::Phi { incoming } => {
                    base_unlock[node.id as usize] = 1;
                    for &(_, v) in incoming {
                        if !phi_users[v as usize].contains(&node.id) {
                            phi_users[v as usize].push(node.id);
                        }
                    }
                }
                _ => {
                    base_unlock[node.id as usize] = node.operands.len() as u32;
                    for &o in &node.operands {
                        consumers[o as usize].push(node.id);
                    }
                }
            }
        }
        let mut node_loops = vec![Vec::new(); n];
        let mut block_loops: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for node in &g.nodes {
            if let Some(b) = node.block {
                node_loops[node.id as usize] = block_loops.entry(b).or_insert_with(|| g.enclosing_loops(b)).clone();
            }
        }
        let loop_nodes = g
            .loops
            .values()
            .map(|l| (l.header, l.members.iter().flat_map(|&b| g.block_nodes(b)).collect()))
            .collect();
        SchedulerState {
            consumers,
            phi_users,
            pending: base_unlock.clone(),
            base_unlock,
            done: vec![false; n],
            queued: vec![false; n],
            issued: vec![false; n],
            values: vec![None; n],
            heavy: VecDeque::new(),
            light: VecDeque::new(),
            entered: vec![false; n],
            pred: vec![None; n],
            visits: vec![0; n],
            phi_sel: vec![None; n],
            epochs: EpochTable::default(),
            node_loops,
            loop_nodes,
            streak: vec![0; n],
            parked: Vec::new(),
            entries: Vec::new(),
            finished: false,
            started: false,
            trace: trace.then(|| (Instant::now(), Vec::new())),
            worker: 0,
            g,
        }
    }

    pub fn graph(&self) -> &Arc<CircuitGraph> {
        &self.g
    }

    pub fn epochs(&self) -> &EpochTable {
        &self.epochs
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn is_done(&self, id: NodeId) -> bool {
        self.done[id as usize]
    }

    pub fn value(&self, id: NodeId) -> Option<&V> {
        self.values[id as usize].as_ref()
    }

    pub fn is_entered(&self, label: NodeId) -> bool {
        self.entered[label as usize]
    }

    pub fn queue_lengths(&self) -> (usize, usize) {
        (self.heavy.iter().filter(|&&i| self.queued[i as usize]).count(), self.light.iter().filter(|&&i| self.queued[i as usize]).count())
    }

    /// Worker id recorded in subsequent trace events.
    pub fn set_worker(&mut self, w: u32) {
        self.worker = w;
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(|(_, t)| std::mem::take(t)).unwrap_or_default()
    }

    /// Block entries `(label, visit)` since the last call, in entry order.
    pub fn drain_block_entries(&mut self) -> Vec<(NodeId, u32)> {
        std::mem::take(&mut self.entries)
    }

    fn emit(&mut self, event: TraceKind, node: NodeId, epoch: u32) {
        if let Some((t0, log)) = &mut self.trace {
            log.push(TraceEvent { t_ns: t0.elapsed().as_nanos() as u64, worker: self.worker, event, node, epoch });
        }
    }

    fn node_epoch(&self, id: NodeId) -> u32 {
        self.node_loops[id as usize].first().map_or(0, |&h| self.epochs.epoch(h))
    }

    /// Supplies the value of an Input or Const node.
    pub fn bind_leaf(&mut self, id: NodeId, v: V) {
        debug_assert!(self.g.node(id).kind.is_leaf());
        if !self.done[id as usize] {
            self.finish(id, v);
        }
    }

    /// Enters the entry block. Call after binding the leaves.
    pub fn start(&mut self) -> Result<(), SchedError> {
        if std::mem::replace(&mut self.started, true) {
            return Ok(());
        }
        self.enter_block(self.g.entry)
    }

    fn try_enqueue(&mut self, u: NodeId) {
        let i = u as usize;
        if self.done[i] || self.queued[i] || self.issued[i] || self.pending[i] > 0 {
            return;
        }
        let node = self.g.node(u);
        if matches!(node.kind, NodeKind::Phi { .. }) || node.kind.is_leaf() {
            return;
        }
        match node.block {
            Some(b) if self.entered[b as usize] => {}
            _ => return,
        }
        self.queued[i] = true;
        if node.kind.is_heavy() {
            self.heavy.push_back(u);
        } else {
            self.light.push_back(u);
        }
    }

    fn pop(q: &mut VecDeque<NodeId>, queued: &mut [bool]) -> Option<NodeId> {
        while let Some(id) = q.pop_front() {
            if std::mem::replace(&mut queued[id as usize], false) {
                return Some(id);
            }
        }
        None
    }

    /// Next compute node, heavy work first. Branches met on the light
    /// queue are taken when allowed and requeued or parked otherwise.
    pub fn next_ready_node(&mut self) -> Result<Option<Issue<V>>, SchedError> {
        let mut since_progress = 0usize;
        loop {
            if let Some(id) = Self::pop(&mut self.heavy, &mut self.queued) {
                return Ok(Some(self.issue(id)));
            }
            let Some(id) = Self::pop(&mut self.light, &mut self.queued) else {
                return Ok(None);
            };
            if !matches!(self.g.node(id).kind, NodeKind::Branch { .. }) {
                return Ok(Some(self.issue(id)));
            }
            if self.try_branch_once(id)? {
                since_progress = 0;
                continue;
            }
            self.streak[id as usize] += 1;
            if self.streak[id as usize] >= STALL_LIMIT {
                self.parked.push(id);
            } else {
                self.queued[id as usize] = true;
                self.light.push_back(id);
            }
            since_progress += 1;
            if since_progress > self.light.len() {
                return Ok(None);
            }
        }
    }

    fn issue(&mut self, id: NodeId) -> Issue<V> {
        self.issued[id as usize] = true;
        let epoch = self.node_epoch(id);
        self.emit(TraceKind::Issue, id, epoch);
        let node = self.g.node(id);
        let args = node.operands.iter().map(|&o| self.values[o as usize].clone().expect("operand completed")).collect();
        Issue {
            id,
            kind: node.kind.clone(),
            operands: node.operands.clone(),
            args,
            visit: node.block.map_or(0, |b| self.visits[b as usize]),
        }
    }

    pub fn mark_complete(&mut self, id: NodeId, v: V) -> Result<(), SchedError> {
        let i = id as usize;
        if !self.issued[i] {
            return Err(if self.done[i] { SchedError::DoubleCompletion { node: id } } else { SchedError::NotIssued { node: id } });
        }
        self.issued[i] = false;
        self.finish(id, v);
        Ok(())
    }

    fn finish(&mut self, id: NodeId, v: V) {
        let mut work = vec![(id, v)];
        while let Some((u, v)) = work.pop() {
            let i = u as usize;
            self.done[i] = true;
            self.values[i] = Some(v.clone());
            for k in 0..self.node_loops[i].len() {
                let h = self.node_loops[i][k];
                let e = self.epochs.epoch(h);
                if e > 0 && e != FINISHED {
                    self.epochs.last_done.entry(h).or_default().insert(u, e);
                }
            }
            if !self.g.node(u).kind.is_leaf() {
                let e = self.node_epoch(u);
                self.emit(TraceKind::Complete, u, e);
            }
            if u == self.g.root {
                self.finished = true;
            }
            for k in 0..self.consumers[i].len() {
                let c = self.consumers[i][k];
                if !self.done[c as usize] && self.pending[c as usize] > 0 {
                    self.pending[c as usize] -= 1;
                    self.try_enqueue(c);
                }
            }
            for k in 0..self.phi_users[i].len() {
                let p = self.phi_users[i][k];
                let pi = p as usize;
                let block_entered = self.g.node(p).block.is_some_and(|b| self.entered[b as usize]);
                if !self.done[pi] && self.pending[pi] > 0 && self.phi_sel[pi] == Some(u) && block_entered {
                    self.pending[pi] = 0;
                    work.push((p, v.clone()));
                }
            }
        }
        for b in std::mem::take(&mut self.parked) {
            self.streak[b as usize] = 0;
            if !self.done[b as usize] && !self.queued[b as usize] {
                self.queued[b as usize] = true;
                self.light.push_back(b);
            }
        }
    }

    /// Attempts to take branch `id`. Returns `Ok(false)` without side
    /// effects when loop gating holds it back.
    pub fn try_branch_once(&mut self, id: NodeId) -> Result<bool, SchedError> {
        let g = self.g.clone();
        let node = g.node(id);
        let NodeKind::Branch { targets } = &node.kind else {
            return Ok(false);
        };
        let cur = node.block.expect("branches live in blocks");
        let dst = if targets.len() == 1 {
            targets[0]
        } else {
            let c = node.operands[0];
            if g.node(c).privacy.is_private() {
                return Err(SchedError::SecretControlFlow { node: id });
            }
            let cond = self.values[c as usize].as_ref().and_then(|v| v.branch_condition());
            match cond {
                None if self.done[c as usize] => return Err(SchedError::SecretControlFlow { node: id }),
                None => return Ok(false),
                Some(true) => targets[0],
                Some(false) => targets[1],
            }
        };
        let mut finishing = Vec::new();
        for &h in &self.node_loops[id as usize] {
            let info = &g.loops[&h];
            let exits = !info.contains(dst);
            if dst != h && !exits {
                continue;
            }
            let e = self.epochs.epoch(h);
            if e > 0 && e != FINISHED && !self.is_loop_epoch_complete(h, id, e) {
                let ne = self.node_epoch(id);
                self.emit(TraceKind::BranchStalled, id, ne);
                return Ok(false);
            }
            if exits {
                finishing.push(h);
            }
        }
        for h in finishing {
            self.epochs.loop_epoch.insert(h, FINISHED);
            self.emit(TraceKind::EpochAdvance, h, FINISHED);
        }
        let ne = self.node_epoch(id);
        self.emit(TraceKind::BranchTaken, id, ne);
        self.done[id as usize] = true;
        self.streak[id as usize] = 0;
        self.pred[dst as usize] = Some(cur);
        self.enter_block(dst)?;
        Ok(true)
    }

    /// Walks the loop body from the header along the taken path and
    /// checks that every compute node on it completed in epoch `e`.
    pub fn is_loop_epoch_complete(&self, h: NodeId, branch: NodeId, e: u32) -> bool {
        let g = &self.g;
        let info = &g.loops[&h];
        let branch_block = g.node(branch).block;
        let mut work = vec![h];
        let mut seen = HashSet::new();
        while let Some(b) = work.pop() {
            if !info.contains(b) || !seen.insert(b) {
                continue;
            }
            if b != h {
                if let Some(inner) = g.loops.get(&b) {
                    if !branch_block.is_some_and(|bb| inner.contains(bb)) {
                        // an inner loop counts through the exits it actually took
                        let taken: Vec<NodeId> = inner.exits.iter().copied().filter(|&x| self.entered[x as usize]).collect();
                        if taken.is_empty() {
                            return false;
                        }
                        work.extend(taken);
                        continue;
                    }
                }
            }
            let nodes = g.block_nodes(b);
            for &u in &nodes {
                if u == branch {
                    return true;
                }
                if g.node(u).kind.is_compute() && self.epochs.stamp(h, u) < e {
                    return false;
                }
            }
            let Some(&t) = nodes.last() else { return false };
            match &g.node(t).kind {
                NodeKind::Branch { targets } if targets.len() == 2 => {
                    let c = g.node(t).operands[0];
                    if !self.done[c as usize] {
                        return false;
                    }
                    match self.values[c as usize].as_ref().and_then(|v| v.branch_condition()) {
                        Some(true) => work.push(targets[0]),
                        Some(false) => work.push(targets[1]),
                        None => return false,
                    }
                }
                NodeKind::Branch { targets } => work.extend(targets.iter().copied()),
                _ => {}
            }
        }
        false
    }

    fn enter_block(&mut self, dst: NodeId) -> Result<(), SchedError> {
        let g = self.g.clone();
        let d = dst as usize;
        self.visits[d] += 1;
        self.entries.push((dst, self.visits[d]));
        let pred = self.pred[d];
        let nodes = g.block_nodes(dst);
        let mut phis = Vec::new();
        for &u in &nodes {
            if let NodeKind::Phi { incoming } = &g.node(u).kind {
                let sel = incoming.iter().find(|(l, _)| Some(*l) == pred).map(|&(_, v)| v);
                let sel = sel.ok_or(SchedError::UnknownPredecessor { phi: u, pred })?;
                phis.push((u, sel));
            }
        }
        let header_epoch = if let Some(info) = g.loops.get(&dst) {
            let back = pred.is_some_and(|p| info.contains(p));
            let e = if back {
                self.epochs.epoch(dst) + 1
            } else {
                self.epochs.last_done.remove(&dst);
                1
            };
            self.epochs.loop_epoch.insert(dst, e);
            Some(e)
        } else {
            None
        };
        let ne = self.node_epoch(dst);
        self.emit(TraceKind::BlockEnter, dst, ne);
        if let Some(e) = header_epoch {
            self.emit(TraceKind::EpochAdvance, dst, e);
        }
        let captured: Vec<(NodeId, NodeId, Option<V>)> = phis
            .iter()
            .map(|&(p, sel)| (p, sel, self.done[sel as usize].then(|| self.values[sel as usize].clone().unwrap())))
            .collect();
        if header_epoch.is_some() {
            self.reset_loop(dst);
        }
        self.entered[d] = true;
        for (p, sel, v) in captured {
            self.phi_sel[p as usize] = Some(sel);
            match v {
                Some(v) => {
                    self.pending[p as usize] = 0;
                    self.finish(p, v);
                }
                None => self.pending[p as usize] = 1,
            }
        }
        for &u in &nodes {
            self.try_enqueue(u);
        }
        Ok(())
    }

    /// Re-arms every node of the loop headed by `h` for a new epoch.
    fn reset_loop(&mut self, h: NodeId) {
        let g = self.g.clone();
        let nodes = &self.loop_nodes[&h];
        let in_loop: HashSet<NodeId> = nodes.iter().copied().collect();
        for &u in nodes {
            if !self.done[u as usize] {
                continue;
            }
            for &c in &self.consumers[u as usize] {
                if !in_loop.contains(&c) && !self.done[c as usize] {
                    self.pending[c as usize] += 1;
                }
            }
        }
        for &u in nodes {
            let i = u as usize;
            self.done[i] = false;
            self.queued[i] = false;
            self.phi_sel[i] = None;
            self.streak[i] = 0;
        }
        self.parked.retain(|b| !in_loop.contains(b));
        for &u in nodes {
            let node = g.node(u);
            self.pending[u as usize] = match node.kind {
                NodeKind::Phi { .. } => 1,
                _ => node.operands.iter().filter(|&&o| !self.done[o as usize]).count() as u32,
            };
        }
        for &b in &g.loops[&h].members {
            if b != h {
                self.entered[b as usize] = false;
            }
        }
    }

    /// Initial dependency count of `id`.
    pub fn base_unlock(&self, id: NodeId) -> u32 {
        self.base_unlock[id as usize]
    }

    pub fn pending(&self, id: NodeId) -> u32 {
        self.pending[id as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputClass {
    /// Produced outside the loop; satisfied for the whole run of the loop.
    Stable,
    /// Produced inside the loop; re-gated every epoch.
    Iterative,
}

/// Classifies the operands (incoming values for phis) of every node that
/// sits in a loop, against that node's innermost loop.
pub fn classify_loop_inputs(g: &CircuitGraph) -> BTreeMap<NodeId, Vec<(NodeId, InputClass)>> {
    let mut out = BTreeMap::new();
    for node in &g.nodes {
        let Some(b) = node.block else { continue };
        let Some(&h) = g.enclosing_loops(b).first() else { continue };
        let info = &g.loops[&h];
        let producers: Vec<NodeId> = match &node.kind {
            NodeKind::Phi { incoming } => incoming.iter().map(|&(_, v)| v).collect(),
            _ => node.operands.clone(),
        };
        let classes = producers
            .into_iter()
            .map(|p| {
                let inside = g.node(p).block.is_some_and(|pb| info.contains(pb));
                (p, if inside { InputClass::Iterative } else { InputClass::Stable })
            })
            .collect();
        out.insert(node.id, classes);
    }
    out
}
