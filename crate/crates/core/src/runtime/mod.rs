//! One party's online phase: input sharing, the scheduler-driven node
//! loop and the MAC checks.
//!
//! Triples are reserved when a block is entered, walking the block's
//! nodes in chain order. Block entry order is the same on every party, so
//! every party hands the same triples to the same node without talking.

mod exec;
mod local;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::task::JoinSet;

pub use exec::{ExecCtx, Reservation};
pub use local::{deal_for, run_local, DealError, LocalRun};

use crate::backend::{BackendError, BackendSet, CpuBackend};
use crate::demand::{node_demand, static_demand, Demand};
use crate::field::Fp;
use crate::graph::{CircuitGraph, NodeId, NodeKind};
use crate::io::{check_inputs, check_supply, share_inputs, InputBundle, IoError};
use crate::linear::{plan_tiles, LinearError, DEFAULT_SLICE};
use crate::net::Session;
use crate::sched::{SchedError, SchedulerState, TraceEvent};
use crate::spdz::{batch_id, unpack_batch_id, Online, SpdzError, TriplePool, TripleStore, CHECK_NODE};
use crate::value::Value;

/// Opened values that trigger a MAC check before the end of the run.
pub const DEFAULT_CHECK_THRESHOLD: usize = 1 << 20;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub threads: usize,
    pub slice: u64,
    pub trace: bool,
    pub check_threshold: usize,
    /// Seed for MAC-check nonces and salts.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { threads: 1, slice: DEFAULT_SLICE, trace: false, check_threshold: DEFAULT_CHECK_THRESHOLD, seed: 0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Spdz(#[from] SpdzError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("load {node} reads {lanes} elements at {start} of a {len}-element input")]
    LoadOutOfBounds { node: NodeId, start: usize, lanes: usize, len: usize },
    #[error("load {node} has a secret index")]
    PrivateIndex { node: NodeId },
    #[error("comparison {node} on secret operands")]
    PrivateComparison { node: NodeId },
    #[error("no node is ready and nothing is in flight, but the root has not completed")]
    Deadlock,
    #[error("worker task failed: {0}")]
    Task(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl RunError {
    /// The protocol-level cause, looking through wrappers.
    pub fn spdz(&self) -> Option<&SpdzError> {
        match self {
            RunError::Spdz(e) | RunError::Linear(LinearError::Spdz(e)) | RunError::Io(IoError::Store(e)) => Some(e),
            _ => None,
        }
    }
}

/// Result of one party's online phase.
#[derive(Clone, Debug)]
pub struct PartyRun {
    pub party: usize,
    pub output: Vec<Fp>,
    pub trace: Vec<TraceEvent>,
    pub scalar_consumed: usize,
    pub matrix_consumed: usize,
    pub opened: u64,
    pub mac_checks: u64,
    pub online_time: Duration,
}

thread_local! {
    static WORKER: std::cell::Cell<u32> = const { std::cell::Cell::new(0) };
}

/// Multi-threaded runtime with `threads` workers, numbered from 0 in
/// trace events.
pub fn build_runtime(threads: usize) -> std::io::Result<tokio::runtime::Runtime> {
    let next = Arc::new(AtomicU32::new(0));
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(threads.max(1))
        .enable_all()
        .on_thread_start(move || WORKER.with(|c| c.set(next.fetch_add(1, Ordering::Relaxed))))
        .build()
}

fn worker_id() -> u32 {
    WORKER.with(|c| c.get())
}

struct CheckGroup {
    id: u64,
    members: HashSet<(NodeId, u32)>,
    remaining: usize,
    closed: bool,
}

/// Triple cursors and MAC-check grouping, advanced at block entry.
struct Ledger {
    slice: u64,
    threshold: usize,
    scalar: usize,
    matrix: usize,
    reserved: HashMap<(NodeId, u32), Reservation>,
    per_block: HashMap<NodeId, Vec<(NodeId, Demand, usize)>>,
    groups: Vec<CheckGroup>,
    group_of: HashMap<(NodeId, u32), usize>,
    open_count: usize,
}

impl Ledger {
    fn new(slice: u64, threshold: usize) -> Ledger {
        Ledger {
            slice,
            threshold: threshold.max(1),
            scalar: 0,
            matrix: 0,
            reserved: HashMap::new(),
            per_block: HashMap::new(),
            groups: Vec::new(),
            group_of: HashMap::new(),
            open_count: 0,
        }
    }

    fn enter(&mut self, g: &CircuitGraph, label: NodeId, visit: u32) -> Result<(), RunError> {
        if !self.per_block.contains_key(&label) {
            let mut v = Vec::new();
            for u in g.block_nodes(label) {
                let d = node_demand(g, u, self.slice)?;
                let opens = opened_values(g, u, self.slice)?;
                if d != Demand::default() || opens > 0 {
                    v.push((u, d, opens));
                }
            }
            self.per_block.insert(label, v);
        }
        for (u, d, opens) in &self.per_block[&label] {
            self.reserved.insert((*u, visit), Reservation { scalar: self.scalar, matrix: self.matrix });
            self.scalar += d.scalar;
            self.matrix += d.matrix.len();
            if *opens == 0 {
                continue;
            }
            if self.groups.last().is_none_or(|gr| gr.closed) {
                self.groups.push(CheckGroup { id: 0, members: HashSet::new(), remaining: 0, closed: false });
            }
            let gi = self.groups.len() - 1;
            let gr = &mut self.groups[gi];
            gr.members.insert((*u, visit));
            gr.remaining += 1;
            self.group_of.insert((*u, visit), gi);
            self.open_count += opens;
            if self.open_count >= self.threshold {
                gr.closed = true;
                gr.id = batch_id(CHECK_NODE, visit, *u);
                self.open_count = 0;
            }
        }
        Ok(())
    }

    fn take(&mut self, id: NodeId, visit: u32) -> Reservation {
        self.reserved.remove(&(id, visit)).unwrap_or_default()
    }

    /// Records a completion; returns a group whose check can now run.
    fn completed(&mut self, id: NodeId, visit: u32) -> Option<(u64, HashSet<(NodeId, u32)>)> {
        let gi = self.group_of.remove(&(id, visit))?;
        let gr = &mut self.groups[gi];
        gr.remaining -= 1;
        (gr.closed && gr.remaining == 0).then(|| (gr.id, std::mem::take(&mut gr.members)))
    }
}

/// Values a node opens per execution, judged by graph privacy.
fn opened_values(g: &CircuitGraph, u: NodeId, slice: u64) -> Result<usize, LinearError> {
    let node = g.node(u);
    let private = |k: usize| g.node(node.operands[k]).privacy.is_private();
    Ok(match &node.kind {
        NodeKind::Multiplier | NodeKind::MultBatch if private(0) && private(1) => 2 * node.lanes as usize,
        NodeKind::ReduceMul if private(0) => 2 * (g.node(node.operands[0]).lanes as usize - 1),
        NodeKind::LinearLayer { din, dout } if private(0) && private(1) => {
            let plan = plan_tiles(*din, *dout, slice)?;
            plan.tiles.iter().map(|t| (t.rows as usize + 1) * *din as usize).sum()
        }
        NodeKind::Root if !node.operands.is_empty() && private(0) => node.lanes as usize,
        _ => 0,
    })
}

enum Done {
    Node(NodeId, u32, u32, Result<Value, RunError>),
    Check(Result<usize, SpdzError>),
}

/// Runs the online phase for one party. `inputs` holds the cleartext
/// values of the parameters this party owns.
pub async fn run_online(
    graph: Arc<CircuitGraph>,
    store: TripleStore,
    inputs: &InputBundle,
    session: Arc<Session>,
    cfg: &RunConfig,
) -> Result<PartyRun, RunError> {
    let t0 = Instant::now();
    let party = session.party();
    if store.party as usize != party || store.parties as usize != session.parties() {
        return Err(IoError::WrongParty { store: store.party, parties: store.parties, party, n: session.parties() }.into());
    }
    check_inputs(&graph, &store, inputs)?;
    check_supply(&store, &static_demand(&graph, cfg.slice)?)?;

    let backends = BackendSet::cpu_only(Arc::new(CpuBackend::default()));
    let online = Arc::new(Online::new(session, store.alpha_share, backends, cfg.seed));
    let mut plans = HashMap::new();
    for n in &graph.nodes {
        if let NodeKind::LinearLayer { din, dout } = n.kind {
            plans.insert(n.id, plan_tiles(din, dout, cfg.slice)?);
        }
    }
    let leaves = share_inputs(&online, &graph, &store, inputs).await?;
    let pool = Arc::new(TriplePool::new(store));
    let ctx = Arc::new(ExecCtx { graph: graph.clone(), online: online.clone(), pool: pool.clone(), plans });

    let mut sched = SchedulerState::<Value>::new(graph.clone(), cfg.trace);
    for (node, v) in leaves {
        sched.bind_leaf(node, v);
    }
    for n in &graph.nodes {
        if let NodeKind::Const { values } = &n.kind {
            sched.bind_leaf(n.id, Value::public(values.clone()));
        }
    }
    sched.start()?;

    let mut ledger = Ledger::new(cfg.slice, cfg.check_threshold);
    let mut tasks: JoinSet<Done> = JoinSet::new();
    loop {
        for (label, visit) in sched.drain_block_entries() {
            ledger.enter(&graph, label, visit)?;
        }
        while let Some(issue) = sched.next_ready_node()? {
            for (label, visit) in sched.drain_block_entries() {
                ledger.enter(&graph, label, visit)?;
            }
            let res = ledger.take(issue.id, issue.visit);
            let ctx = ctx.clone();
            let (id, visit) = (issue.id, issue.visit);
            tasks.spawn(async move {
                let r = ctx.execute(issue, res).await;
                Done::Node(id, visit, worker_id(), r)
            });
        }
        for (label, visit) in sched.drain_block_entries() {
            ledger.enter(&graph, label, visit)?;
        }
        let Some(joined) = tasks.join_next().await else {
            if sched.is_finished() {
                break;
            }
            return Err(RunError::Deadlock);
        };
        match joined.map_err(|e| RunError::Task(e.to_string()))? {
            Done::Node(id, visit, worker, r) => {
                sched.set_worker(worker);
                sched.mark_complete(id, r?)?;
                if let Some((check_id, members)) = ledger.completed(id, visit) {
                    let online = online.clone();
                    tasks.spawn(async move {
                        let r = online.mac_check_where(check_id, |tag| {
                            let (n, v, _) = unpack_batch_id(tag);
                            members.contains(&(n, v))
                        });
                        Done::Check(r.await)
                    });
                }
            }
            Done::Check(r) => {
                r?;
            }
        }
    }
    online.mac_check_all().await?;

    let output = match sched.value(graph.root) {
        Some(v) => v.public_values().ok_or_else(|| RunError::Internal("root value is still shared".into()))?.to_vec(),
        None => return Err(RunError::Deadlock),
    };
    Ok(PartyRun {
        party,
        output,
        trace: sched.take_trace(),
        scalar_consumed: pool.scalar_consumed(),
        matrix_consumed: pool.matrix_consumed(),
        opened: online.opened_total(),
        mac_checks: online.checks_run(),
        online_time: t0.elapsed(),
    })
}
