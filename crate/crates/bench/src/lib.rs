//! Shared workload builders for the benchmarks.

use std::sync::Arc;

use mpcflow::graph::CircuitGraph;
use mpcflow::io::InputBundle;
use mpcflow::pipeline::{linear_layer_ir, random_inputs, Circuit};
use mpcflow::runtime::{deal_for, RunConfig};
use mpcflow::spdz::{AuthShare, ShareBatch, TripleStore};
use mpcflow::Fp;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// A batch of `n` random shares.
pub fn random_batch(n: usize, seed: u64) -> ShareBatch {
    let mut r = rng(seed);
    ShareBatch { values: (0..n).map(|_| Fp::random(&mut r)).collect(), macs: (0..n).map(|_| Fp::random(&mut r)).collect() }
}

/// The same shares one lane at a time.
pub fn to_scalars(b: &ShareBatch) -> Vec<AuthShare> {
    b.values.iter().zip(&b.macs).map(|(&v, &m)| AuthShare::new(v, m)).collect()
}

/// A compiled `din x dout` layer with random inputs and stores dealt for
/// `parties`.
pub struct LayerWorkload {
    pub ir: String,
    pub graph: Arc<CircuitGraph>,
    pub inputs: InputBundle,
    pub stores: Vec<TripleStore>,
}

pub fn layer(din: u32, dout: u32, parties: usize, slice: u64, seed: u64) -> LayerWorkload {
    let ir = linear_layer_ir(din, dout);
    let graph = Arc::new(Circuit::Ir { text: &ir, entry: None }.load().expect("generated layer compiles"));
    let inputs = random_inputs(&graph, 5, &mut rng(seed));
    let stores = deal_for(&graph, parties, &inputs, slice, seed).expect("layer demand is static");
    LayerWorkload { ir, graph, inputs, stores }
}

pub fn config(threads: usize, slice: u64) -> RunConfig {
    RunConfig { threads, slice, ..RunConfig::default() }
}
