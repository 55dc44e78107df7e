//! All parties in one process over the simulated transport.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{build_runtime, run_online, PartyRun, RunConfig, RunError};
use crate::graph::CircuitGraph;
use crate::io::{mask_requests, InputBundle};
use crate::net::{simulated_mesh, FaultPlan, Session};
use crate::oracle::{interpret, OracleError};
use crate::spdz::{fake_dealer, DealerRequest, TripleStore};

#[derive(Debug, thiserror::Error)]
pub enum DealError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Plan(#[from] crate::linear::LinearError),
}

/// Stores sized for exactly the run `inputs` leads to, found by running
/// the cleartext interpreter first.
pub fn deal_for(g: &CircuitGraph, parties: usize, inputs: &InputBundle, slice: u64, seed: u64) -> Result<Vec<TripleStore>, DealError> {
    let run = interpret(g, &inputs.params)?;
    let d = run.demand(g, slice)?;
    let req = DealerRequest { scalar: d.scalar, matrix: d.matrix, inputs: mask_requests(g, parties, &BTreeMap::new()) };
    Ok(fake_dealer(parties, &req, &mut ChaCha20Rng::seed_from_u64(seed)))
}

/// Per-party results of a local run, in party order.
pub struct LocalRun {
    pub parties: Vec<Result<PartyRun, RunError>>,
    pub sessions: Vec<Arc<Session>>,
}

impl LocalRun {
    /// The output all parties agree on, or the first failure.
    pub fn output(&self) -> Result<&[crate::field::Fp], &RunError> {
        let mut out: Option<&[crate::field::Fp]> = None;
        for p in &self.parties {
            let o = p.as_ref()?.output.as_slice();
            if let Some(prev) = out {
                assert_eq!(prev, o, "parties disagree on the output");
            }
            out = Some(o);
        }
        Ok(out.unwrap_or(&[]))
    }
}

/// Runs every party on its own thread and runtime. Each party sees only
/// the inputs it owns.
pub fn run_local(
    g: Arc<CircuitGraph>,
    stores: Vec<TripleStore>,
    inputs: &InputBundle,
    plan: &FaultPlan,
    io_timeout: Duration,
    cfg: &RunConfig,
) -> LocalRun {
    let n = stores.len();
    let sessions = simulated_mesh(n, plan, io_timeout);
    let parties = thread::scope(|sc| {
        let handles: Vec<_> = stores
            .into_iter()
            .zip(&sessions)
            .enumerate()
            .map(|(i, (store, session))| {
                let (g, session) = (g.clone(), session.clone());
                let mine = inputs.owned_by(&store, i);
                sc.spawn(move || {
                    let rt = build_runtime(cfg.threads).map_err(|e| RunError::Internal(e.to_string()))?;
                    rt.block_on(run_online(g, store, &mine, session, cfg))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(RunError::Task("party thread panicked".into())))).collect()
    });
    LocalRun { parties, sessions }
}
