//! Whole runs with the front-end / setup / online split: one party over
//! TCP, or every party in one process over the simulated transport.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::compile::{compile, CompileError};
use crate::demand::static_demand;
use crate::field::Fp;
use crate::graph::{deserialize_circuit, BuildOptions, CircuitFileError, CircuitGraph, MAGIC};
use crate::io::{load_setup, mask_requests, InputBundle, IoError};
use crate::linear::LinearError;
use crate::net::{connect_mesh, FaultPlan, MeshConfig, NetError, Session};
use crate::oracle::{interpret, OracleError};
use crate::report::{output_digest, PeerBytes, RunReport, StageClock};
use crate::runtime::{build_runtime, deal_for, run_local, run_online, DealError, PartyRun, RunConfig, RunError};
use crate::sched::TraceEvent;
use crate::spdz::{fake_dealer, DealerRequest, TripleStore};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {error}")]
    File { path: PathBuf, error: std::io::Error },
    #[error("{path}:\n{error}")]
    Compile { path: PathBuf, error: CompileError },
    #[error(transparent)]
    Circuit(#[from] CircuitFileError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("party {party}: {error}")]
    Run { party: usize, error: RunError },
    #[error(transparent)]
    Deal(#[from] DealError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Plan(#[from] LinearError),
    #[error("triple store is for party {store} of {parties}, but this is party {party}")]
    WrongParty { party: usize, store: u32, parties: u32 },
    #[error("the config lists {endpoints} parties but the triple store was dealt for {parties}")]
    PartyCount { endpoints: usize, parties: u32 },
    #[error("could not start the runtime: {0}")]
    Runtime(std::io::Error),
}

impl PipelineError {
    /// The run failure behind this error, if the online phase failed.
    pub fn run_error(&self) -> Option<&RunError> {
        match self {
            PipelineError::Run { error, .. } => Some(error),
            _ => None,
        }
    }
}

/// Reads a circuit: a serialized circuit file if it starts with the
/// circuit magic, IR text otherwise.
pub fn load_circuit(path: &Path, entry: Option<&str>) -> Result<CircuitGraph, PipelineError> {
    let bytes = std::fs::read(path).map_err(|error| PipelineError::File { path: path.into(), error })?;
    if bytes.starts_with(MAGIC) {
        return Ok(deserialize_circuit(&bytes)?);
    }
    let text = String::from_utf8_lossy(&bytes);
    compile(&text, entry, &BuildOptions::default()).map_err(|error| PipelineError::Compile { path: path.into(), error })
}

/// Where a local run gets its circuit from.
#[derive(Clone, Copy, Debug)]
pub enum Circuit<'a> {
    /// A circuit file or IR text on disk.
    File { path: &'a Path, entry: Option<&'a str> },
    /// IR text in memory.
    Ir { text: &'a str, entry: Option<&'a str> },
}

impl Circuit<'_> {
    pub fn load(&self) -> Result<CircuitGraph, PipelineError> {
        match *self {
            Circuit::File { path, entry } => load_circuit(path, entry),
            Circuit::Ir { text, entry } => {
                compile(text, entry, &BuildOptions::default()).map_err(|error| PipelineError::Compile { path: "<memory>".into(), error })
            }
        }
    }
}

/// IR for `y = W x + b` with `W` of shape `dout x din`; `x` and `W` private,
/// `b` public.
pub fn linear_layer_ir(din: u32, dout: u32) -> String {
    let (xb, wb, bb) = (4 * din as u64, 4 * din as u64 * dout as u64, 4 * dout as u64);
    format!(
        "@.priv = private unnamed_addr constant [8 x i8] c\"private\\00\", section \"llvm.metadata\"
@.pub = private unnamed_addr constant [7 x i8] c\"public\\00\", section \"llvm.metadata\"

define dso_local ptr @linear_layer(ptr noundef dereferenceable({xb}) %x, ptr noundef dereferenceable({wb}) %W, ptr noundef dereferenceable({bb}) %b) #0 {{
entry:
  call void @llvm.var.annotation.p0.p0(ptr %x, ptr @.priv, ptr @.priv, i32 1, ptr null)
  call void @llvm.var.annotation.p0.p0(ptr %W, ptr @.priv, ptr @.priv, i32 2, ptr null)
  call void @llvm.var.annotation.p0.p0(ptr %b, ptr @.pub, ptr @.priv, i32 3, ptr null)
  %out = call ptr @mark_linear_layer(ptr %x, ptr %W, ptr %b, i32 {din}, i32 {dout})
  ret ptr %out
}}

declare void @llvm.var.annotation.p0.p0(ptr, ptr, ptr, i32, ptr)
declare ptr @mark_linear_layer(ptr, ptr, ptr, i32, i32)
attributes #0 = {{ noinline nounwind }}
"
    )
}

/// Random values for every circuit input. Public scalars (trip counts,
/// selectors) are drawn from `0..small` so loops stay short.
pub fn random_inputs(g: &CircuitGraph, small: u32, rng: &mut impl Rng) -> InputBundle {
    let params = g
        .inputs
        .iter()
        .map(|d| {
            let vals = (0..d.len)
                .map(|_| if !d.privacy.is_private() && d.len == 1 { Fp::new(rng.gen_range(0..small.max(1))) } else { Fp::random(rng) })
                .collect();
            (d.name.clone(), vals)
        })
        .collect::<BTreeMap<_, _>>();
    InputBundle::new(params)
}

/// What the dealer should produce for `g`. With `inputs` the demand is
/// exact for that run; without, it covers the blocks that always run and
/// at least `min_scalar` scalar triples.
pub fn dealer_request(g: &CircuitGraph, parties: usize, slice: u64, inputs: Option<&InputBundle>, min_scalar: usize) -> Result<DealerRequest, PipelineError> {
    let d = match inputs {
        Some(inp) => interpret(g, &inp.params)?.demand(g, slice)?,
        None => static_demand(g, slice)?,
    };
    Ok(DealerRequest { scalar: d.scalar.max(min_scalar), matrix: d.matrix, inputs: mask_requests(g, parties, &BTreeMap::new()) })
}

/// Deterministic fake preprocessing from `seed`.
pub fn preprocess(req: &DealerRequest, parties: usize, seed: u64) -> Vec<TripleStore> {
    fake_dealer(parties, req, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// One party's files and knobs for a networked run.
#[derive(Clone, Debug)]
pub struct PartySpec {
    pub circuit: PathBuf,
    pub entry: Option<String>,
    pub party: usize,
    pub endpoints: Vec<String>,
    pub triples: PathBuf,
    pub inputs: Option<PathBuf>,
    pub connect_timeout: Duration,
    pub io_timeout: Duration,
    pub cfg: RunConfig,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub report: RunReport,
    pub output: Vec<Fp>,
    pub trace: Vec<TraceEvent>,
}

fn report(run: &PartyRun, session: &Session, clock: &StageClock, cfg: &RunConfig) -> RunReport {
    let per_peer: Vec<PeerBytes> = session
        .peers()
        .map(|peer| PeerBytes { peer, sent: session.bytes_sent_to(peer), received: session.bytes_received_from(peer) })
        .collect();
    let mut r = RunReport {
        party: run.party,
        parties: session.parties(),
        bytes_sent: session.bytes_sent(),
        bytes_received: session.bytes_received(),
        per_peer,
        scalar_triples: run.scalar_consumed,
        matrix_triples: run.matrix_consumed,
        opened_values: run.opened,
        mac_checks: run.mac_checks,
        output_len: run.output.len(),
        output_digest: output_digest(&run.output),
        workers: cfg.threads,
        slice: cfg.slice,
        ..RunReport::default()
    };
    r.set_stages(clock);
    r
}

/// Runs one party against its peers over TCP.
pub fn run_party(spec: &PartySpec) -> Result<PipelineRun, PipelineError> {
    let mut clock = StageClock::new();
    let graph = Arc::new(load_circuit(&spec.circuit, spec.entry.as_deref())?);
    clock.lap();

    let (store, inputs) = load_setup(&graph, &spec.triples, spec.inputs.as_deref(), spec.cfg.slice)?;
    if store.party as usize != spec.party {
        return Err(PipelineError::WrongParty { party: spec.party, store: store.party, parties: store.parties });
    }
    if store.parties as usize != spec.endpoints.len() {
        return Err(PipelineError::PartyCount { endpoints: spec.endpoints.len(), parties: store.parties });
    }
    let mesh = MeshConfig {
        party: spec.party,
        endpoints: spec.endpoints.clone(),
        connect_timeout: spec.connect_timeout,
        io_timeout: spec.io_timeout,
    };
    let session = Arc::new(connect_mesh(&mesh)?);
    clock.lap();

    let rt = build_runtime(spec.cfg.threads).map_err(PipelineError::Runtime)?;
    let run = rt
        .block_on(run_online(graph, store, &inputs, session.clone(), &spec.cfg))
        .map_err(|error| PipelineError::Run { party: spec.party, error })?;
    drop(rt);
    clock.lap();

    Ok(PipelineRun { report: report(&run, &session, &clock, &spec.cfg), trace: run.trace.clone(), output: run.output })
}

/// Every party in this process: load `circuit`, deal exactly what the
/// run needs, then run all parties over the simulated transport. The
/// stage timings are shared by all reports.
pub fn run_local_pipeline(
    circuit: Circuit<'_>,
    inputs: &InputBundle,
    parties: usize,
    cfg: &RunConfig,
    seed: u64,
    plan: &FaultPlan,
    io_timeout: Duration,
) -> Result<Vec<PipelineRun>, PipelineError> {
    let mut clock = StageClock::new();
    let graph = Arc::new(circuit.load()?);
    clock.lap();

    let stores = deal_for(&graph, parties, inputs, cfg.slice, seed)?;
    clock.lap();

    let local = run_local(graph, stores, inputs, plan, io_timeout, cfg);
    clock.lap();

    let mut out = Vec::with_capacity(parties);
    for (party, (r, session)) in local.parties.into_iter().zip(&local.sessions).enumerate() {
        let run = r.map_err(|error| PipelineError::Run { party, error })?;
        out.push(PipelineRun { report: report(&run, session, &clock, cfg), output: run.output, trace: run.trace });
    }
    Ok(out)
}
