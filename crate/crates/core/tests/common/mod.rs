#![allow(dead_code)]

pub mod gen;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use mpcflow::graph::{BuildOptions, CircuitGraph};
use mpcflow::io::InputBundle;
use mpcflow::backend::BackendSet;
use mpcflow::net::{simulated_mesh, FaultPlan};
use mpcflow::runtime::{deal_for, run_local, LocalRun, RunConfig};
use mpcflow::spdz::{fake_dealer, DealerRequest, Online, TriplePool};
use mpcflow::Fp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const LOOP_FIXTURES: [&str; 3] = ["loop.ll", "nested_loop.ll", "loop_after_loop.ll"];
pub const FIXTURES: [&str; 7] =
    ["straight_line.ll", "diamond.ll", "loop.ll", "nested_loop.ll", "loop_after_loop.ll", "vector.ll", "linear_layer.ll"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn graph(name: &str, entry: Option<&str>) -> Arc<CircuitGraph> {
    Arc::new(mpcflow::compile(&fixture(name), entry, &BuildOptions::default()).unwrap())
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random field values for every input. Scalar public inputs (trip
/// counts, selectors) stay in 0..5 and the names in `bits` get 0 or 1.
pub fn random_inputs(g: &CircuitGraph, bits: &[&str], rng: &mut impl Rng) -> InputBundle {
    let mut params = BTreeMap::new();
    for inp in &g.inputs {
        let vals = (0..inp.len)
            .map(|_| {
                if bits.contains(&inp.name.as_str()) {
                    Fp::new(rng.gen_range(0..2))
                } else if !inp.privacy.is_private() && inp.len == 1 {
                    Fp::new(rng.gen_range(0..5))
                } else {
                    Fp::new(rng.gen_range(0..mpcflow::P))
                }
            })
            .collect();
        params.insert(inp.name.clone(), vals);
    }
    InputBundle::new(params)
}

pub fn inputs(pairs: &[(&str, Vec<u32>)]) -> InputBundle {
    InputBundle::new(pairs.iter().map(|(k, v)| (k.to_string(), v.iter().map(|&x| Fp::new(x)).collect())).collect())
}

pub fn cfg(threads: usize) -> RunConfig {
    RunConfig { threads, trace: true, ..RunConfig::default() }
}

pub fn run(g: &Arc<CircuitGraph>, inputs: &InputBundle, parties: usize, threads: usize) -> LocalRun {
    let stores = deal_for(g, parties, inputs, cfg(threads).slice, 7).unwrap();
    run_local(g.clone(), stores, inputs, &FaultPlan::none(), Duration::from_secs(10), &cfg(threads))
}

/// `n` protocol endpoints over the simulated mesh with stores for `req`.
/// Returns the endpoints and the dealer's MAC key.
pub fn protocol_parties(n: usize, plan: &FaultPlan, req: &DealerRequest, seed: u64) -> (Vec<(Online, TriplePool)>, Fp) {
    let stores = fake_dealer(n, req, &mut rng(seed));
    let alpha = stores.iter().map(|s| s.alpha_share).sum();
    let ps = simulated_mesh(n, plan, Duration::from_secs(5))
        .into_iter()
        .zip(stores)
        .map(|(s, st)| (Online::new(s, st.alpha_share, BackendSet::default(), seed), TriplePool::new(st)))
        .collect();
    (ps, alpha)
}

/// Runs `f` for every party on its own thread, in party order.
pub fn on_each<T: Send>(ps: &[(Online, TriplePool)], f: impl Fn(&Online, &TriplePool) -> T + Sync) -> Vec<T> {
    std::thread::scope(|sc| {
        let hs: Vec<_> = ps.iter().map(|(o, p)| sc.spawn(|| f(o, p))).collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

pub fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap().block_on(f)
}
