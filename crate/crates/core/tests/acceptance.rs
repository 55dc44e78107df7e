//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Built with `harness = false` so the criteria run one after the
//! other and the timing checks do not compete with each other.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use mpcflow::backend::{Backend, CpuBackend, KernelArg, KernelOp, KernelOutput, KernelRequest};
use mpcflow::graph::{CircuitGraph, NodeId};
use mpcflow::io::InputBundle;
use mpcflow::ir::{parse_module, IrType};
use mpcflow::linear::{assemble, layer_demand, plan_tiles, run_tile, TileResult};
use mpcflow::net::{Fault, FaultPlan, MsgType};
use mpcflow::oracle::{interpret, interpret_ir, matvec};
use mpcflow::pipeline::{linear_layer_ir, Circuit, random_inputs as bundle, run_local_pipeline, run_party, PartySpec, PipelineRun};
use mpcflow::runtime::{deal_for, run_local, RunConfig, RunError};
use mpcflow::sched::{validate_trace, SchedError, FINISHED};
use mpcflow::spdz::{batch_id, reconstruct_batch, share_vector, AuthShare, DealerRequest, ShareBatch, SpdzError};
use mpcflow::{Fp, P};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;
type Check = (u32, &'static str, fn() -> Outcome);
type Path = (BTreeSet<NodeId>, Vec<(NodeId, u32)>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Check; 12] = [
        (1, "64x32 layer, 2 parties over loopback TCP", c1_end_to_end),
        (2, "Beaver multiplication and triple reuse", c2_beaver),
        (3, "tampered openings abort, honest runs do not", c3_tamper),
        (4, "trace validation on every fixture", c4_scheduler_safety),
        (5, "loop gating and epoch sequences", c5_loop_gating),
        (6, "secret control flow aborts", c6_secret_control_flow),
        (7, "idiom lowering matches the raw IR", c7_lowering),
        (8, "tiling plan, order invariance, one triple per tile", c8_tiling),
        (9, "2 to 6 parties agree on the 64x32 layer", c9_party_scaling),
        (10, "digests equal for 1, 2 and 8 workers", c10_determinism),
        (11, "worker scaling and batched kernels", c11_performance),
        (12, "stage timings add up to the total", c12_stages),
    ];
    let mut failed = 0;
    for (n, what, f) in criteria {
        let t = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {n:>2}: PASS  {what} ({detail}; {secs:.2} s)"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL  {what}: {why} ({secs:.2} s)");
            }
        }
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

const IO: Duration = Duration::from_secs(20);

fn free_ports(k: usize) -> Vec<String> {
    let ls: Vec<TcpListener> = (0..k).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    ls.iter().map(|l| l.local_addr().unwrap().to_string()).collect()
}

/// Writes the circuit text, inputs and dealt stores to a temporary
/// directory and runs every party as a separate `run_party` over TCP.
fn tcp_run(ir: &str, parties: usize, seed: u64, cfg: &RunConfig) -> Result<(Vec<PipelineRun>, Vec<Fp>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let circuit = dir.path().join("layer.ll");
    std::fs::write(&circuit, ir).map_err(|e| e.to_string())?;
    let g = mpcflow::pipeline::load_circuit(&circuit, None).map_err(|e| e.to_string())?;
    let inp = bundle(&g, 5, &mut rng(seed));
    let want = interpret(&g, &inp.params).map_err(|e| e.to_string())?.output;
    let inputs = dir.path().join("inputs.bin");
    inp.save(&inputs).map_err(|e| e.to_string())?;
    let stores = deal_for(&g, parties, &inp, cfg.slice, seed).map_err(|e| e.to_string())?;
    let endpoints = free_ports(parties);
    let specs: Vec<PartySpec> = stores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let triples = dir.path().join(format!("p{i}.triples"));
            std::fs::write(&triples, s.to_bytes()).unwrap();
            PartySpec {
                circuit: circuit.clone(),
                entry: None,
                party: i,
                endpoints: endpoints.clone(),
                triples,
                inputs: Some(inputs.clone()),
                connect_timeout: IO,
                io_timeout: IO,
                cfg: cfg.clone(),
            }
        })
        .collect();
    let runs: Vec<_> = std::thread::scope(|sc| {
        let hs: Vec<_> = specs.iter().map(|s| sc.spawn(move || run_party(s))).collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    Ok((runs, want))
}

fn c1_end_to_end() -> Outcome {
    let t = Instant::now();
    let (runs, want) = tcp_run(&linear_layer_ir(64, 32), 2, 1, &RunConfig::default())?;
    let secs = t.elapsed().as_secs_f64();
    ensure!(want.len() == 32, "oracle gave {} values", want.len());
    for r in &runs {
        ensure!(r.output == want, "party {} output differs from W x + b", r.report.party);
    }
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("32 outputs exact, {secs:.2} s"))
}

fn c2_beaver() -> Outcome {
    let n = 1000;
    let (ps, alpha) = protocol_parties(2, &FaultPlan::none(), &DealerRequest { scalar: n, ..Default::default() }, 2);
    let mut r = rng(3);
    let x: Vec<Fp> = (0..n).map(|_| Fp::random(&mut r)).collect();
    let y: Vec<Fp> = (0..n).map(|_| Fp::random(&mut r)).collect();
    let (xs, ys) = (share_vector(&x, alpha, 2, &mut r), share_vector(&y, alpha, 2, &mut r));
    let out = on_each(&ps, |o, pool| {
        let p = o.party();
        block_on(async {
            let t = pool.claim_scalar(0, n).unwrap();
            let z = o.beaver_mul(batch_id(1, 1, 0), xs[p].as_slice(), ys[p].as_slice(), t).await.unwrap();
            o.mac_check_all().await.unwrap();
            (z, pool.claim_scalar(0, 1).err(), pool.claim_scalar(n, 1).err())
        })
    });
    let (vals, macs) = reconstruct_batch(&out.iter().map(|o| o.0.clone()).collect::<Vec<_>>());
    for i in 0..n {
        let want = (x[i].value() as u64 * y[i].value() as u64 % P as u64) as u32;
        ensure!(vals[i].value() == want, "lane {i}: {} != {want}", vals[i].value());
        ensure!(macs[i] == alpha * vals[i], "lane {i}: MAC does not authenticate the product");
    }
    for (_, reuse, past) in &out {
        ensure!(matches!(reuse, Some(SpdzError::TripleExhausted { .. })), "reuse gave {reuse:?}");
        ensure!(matches!(past, Some(SpdzError::TripleExhausted { .. })), "claim past the end gave {past:?}");
    }
    Ok("1000/1000 exact, reuse rejected".into())
}

fn c3_tamper() -> Outcome {
    let g = Arc::new(mpcflow::compile(&linear_layer_ir(16, 8), None, &Default::default()).map_err(|e| e.to_string())?);
    let cfg = RunConfig::default();
    let mut r = rng(4);
    let mut aborted = 0;
    for trial in 0..100 {
        let parties = 2 + trial % 2;
        let inp = bundle(&g, 5, &mut r);
        let stores = deal_for(&g, parties, &inp, cfg.slice, trial as u64).map_err(|e| e.to_string())?;
        let from = r.gen_range(0..parties);
        let to = (from + r.gen_range(1..parties)) % parties;
        let fault = Fault::FlipBit { from, to, msg: MsgType::OpenShares, nth: 0, lane: r.gen_range(0..16 * 9), bit: r.gen_range(0..32) };
        let run = run_local(g.clone(), stores, &inp, &FaultPlan::none().with(fault), IO, &cfg);
        for (p, res) in run.parties.iter().enumerate() {
            match res {
                Err(e) if matches!(e.spdz(), Some(SpdzError::MacCheckFailed { .. })) => {}
                other => return Err(format!("trial {trial}, party {p}: {:?}", other.as_ref().map(|r| &r.output))),
            }
        }
        aborted += 1;
    }
    let mut false_aborts = 0;
    for trial in 0..100 {
        let parties = 2 + trial % 2;
        let inp = bundle(&g, 5, &mut r);
        let want = interpret(&g, &inp.params).map_err(|e| e.to_string())?.output;
        let stores = deal_for(&g, parties, &inp, cfg.slice, 1000 + trial as u64).map_err(|e| e.to_string())?;
        let run = run_local(g.clone(), stores, &inp, &FaultPlan::none(), IO, &cfg);
        match run.output() {
            Ok(out) => ensure!(out == want.as_slice(), "honest trial {trial} gave a wrong output"),
            Err(_) => false_aborts += 1,
        }
    }
    ensure!(false_aborts == 0, "{false_aborts} false aborts in 100 honest runs");
    Ok(format!("{aborted}/100 tampered runs aborted on every party, 0/100 false aborts"))
}

fn path_blocks(g: &CircuitGraph, inp: &InputBundle) -> Result<Path, String> {
    let run = interpret(g, &inp.params).map_err(|e| e.to_string())?;
    Ok((run.path.iter().map(|&(l, _)| l).collect(), run.path))
}

fn c4_scheduler_safety() -> Outcome {
    let mut r = rng(5);
    let (mut traces, mut skipped) = (0, 0);
    for name in FIXTURES {
        let g = graph(name, None);
        for _ in 0..5 {
            let inp = random_inputs(&g, &[], &mut r);
            let (path, _) = path_blocks(&g, &inp)?;
            let run = run(&g, &inp, 2, 2);
            for p in &run.parties {
                let p = p.as_ref().map_err(|e| format!("{name}: {e}"))?;
                let s = validate_trace(&g, &p.trace).map_err(|e| format!("{name}: {e}"))?;
                ensure!(s.entered == path, "{name}: entered {:?}, oracle path {:?}", s.entered, path);
                for &u in &s.issued {
                    let b = g.node(u).block.ok_or(format!("{name}: issued a node with no block"))?;
                    ensure!(path.contains(&b), "{name}: node {u} issued in never-entered block {b}");
                }
                skipped += g.labels.len() - path.len();
                traces += 1;
            }
        }
    }
    Ok(format!("{traces} traces clean, {skipped} never-entered blocks saw no issues"))
}

/// Splits an epoch sequence into activations and checks each is
/// `1..=k` followed by FINISHED.
fn gapless(seq: &[u32]) -> bool {
    let mut next = 1;
    for &e in seq {
        if e == FINISHED {
            if next == 1 {
                return false;
            }
            next = 1;
        } else if e == next {
            next += 1;
        } else {
            return false;
        }
    }
    next == 1
}

fn c5_loop_gating() -> Outcome {
    let cases = [
        ("loop.ll", inputs(&[("n", vec![10]), ("k", vec![3])])),
        ("nested_loop.ll", inputs(&[("n", vec![3]), ("m", vec![4]), ("x", vec![5, 6, 7, 8])])),
    ];
    let mut seqs = Vec::new();
    for (name, inp) in cases {
        let g = graph(name, None);
        let (_, path) = path_blocks(&g, &inp)?;
        let want = interpret(&g, &inp.params).map_err(|e| e.to_string())?.output;
        for threads in [1, 4] {
            let run = run(&g, &inp, 2, threads);
            ensure!(run.output().map_err(|e| e.to_string())? == want.as_slice(), "{name}: output differs from the oracle");
            for p in &run.parties {
                let s = validate_trace(&g, &p.as_ref().unwrap().trace).map_err(|e| format!("{name}: {e}"))?;
                ensure!(s.epochs.len() == g.loops.len(), "{name}: {} of {} headers advanced", s.epochs.len(), g.loops.len());
                for (&h, seq) in &s.epochs {
                    ensure!(gapless(seq), "{name}: header {h} epochs {seq:?}");
                    let visits = path.iter().filter(|&&(l, _)| l == h).count();
                    ensure!(seq.iter().filter(|&&e| e != FINISHED).count() == visits, "{name}: header {h} epochs {seq:?} vs {visits} visits");
                }
                if threads == 1 && p.as_ref().unwrap().party == 0 {
                    seqs.push(format!("{name}: {}", s.epochs.values().map(|v| v.len()).sum::<usize>()));
                }
            }
        }
    }
    Ok(format!("outputs equal the oracle; epoch events {}", seqs.join(", ")))
}

fn c6_secret_control_flow() -> Outcome {
    let g = graph("secret_branch.ll", None);
    let inp = random_inputs(&g, &[], &mut rng(6));
    let run = run(&g, &inp, 2, 2);
    for p in &run.parties {
        ensure!(matches!(p, Err(RunError::Sched(SchedError::SecretControlFlow { .. }))), "got {:?}", p.as_ref().map(|r| &r.output));
    }
    Ok("every party aborted with SecretControlFlow".into())
}

fn c7_lowering() -> Outcome {
    let m = parse_module(&fixture("idioms.ll")).map_err(|_| "idioms.ll does not parse".to_string())?;
    let mut r = rng(7);
    let mut checks = 0;
    for name in ["select", "shl", "zext", "and", "or", "xor", "eq", "ne"] {
        let f = m.function(name).ok_or(format!("no @{name}"))?;
        let g = graph("idioms.ll", Some(name));
        let bits = f.params.iter().all(|p| p.ty == IrType::Int(1));
        let cases: Vec<BTreeMap<String, Vec<Fp>>> = if bits {
            let k = f.params.len();
            (0..1u32 << k).map(|m| f.params.iter().enumerate().map(|(i, p)| (p.name.clone(), vec![Fp::new(m >> i & 1)])).collect()).collect()
        } else {
            (0..1000)
                .map(|_| {
                    f.params
                        .iter()
                        .map(|p| {
                            let v = if p.ty == IrType::Int(1) { r.gen_range(0..2) } else { r.gen_range(0..P) };
                            (p.name.clone(), vec![Fp::new(v)])
                        })
                        .collect()
                })
                .collect()
        };
        for c in &cases {
            let lowered = interpret(&g, c).map_err(|e| e.to_string())?.output;
            let raw = interpret_ir(f, c, 1 << 20).map_err(|e| e.to_string())?;
            ensure!(lowered == raw, "@{name} on {c:?}: {lowered:?} vs {raw:?}");
            checks += 1;
        }
    }
    Ok(format!("{checks} equivalence checks"))
}

fn c8_tiling() -> Outcome {
    let plan = plan_tiles(8192, 8192, 262_140).map_err(|e| e.to_string())?;
    ensure!(plan.tiles.len() == 265, "{} tiles", plan.tiles.len());
    let rows: Vec<u32> = plan.tiles.iter().map(|t| t.rows).collect();
    ensure!(rows[..264].iter().all(|&r| r == 31) && rows[264] == 8, "rows {:?}", &rows[260..]);

    // forced completion orders on a 10 x 6 layer cut into 4 tiles
    let (din, dout) = (6usize, 10usize);
    let small = plan_tiles(din as u32, dout as u32, 18).map_err(|e| e.to_string())?;
    let req = DealerRequest { matrix: layer_demand(&small, true, true), ..Default::default() };
    let (ps, alpha) = protocol_parties(2, &FaultPlan::none(), &req, 8);
    let mut r = rng(9);
    let rv = |n: usize, r: &mut rand_chacha::ChaCha20Rng| (0..n).map(|_| Fp::random(r)).collect::<Vec<_>>();
    let (x, w, b) = (rv(din, &mut r), rv(din * dout, &mut r), rv(dout, &mut r));
    let (xs, ws) = (share_vector(&x, alpha, 2, &mut r), share_vector(&w, alpha, 2, &mut r));
    let want = matvec(&w, &x, &b, din, dout);
    let mut first: Option<Vec<ShareBatch>> = None;
    let mut order: Vec<usize> = (0..small.tiles.len()).collect();
    for k in 0..6u32 {
        order.shuffle(&mut r);
        let out = on_each(&ps, |o, pool| {
            let p = o.party();
            let results: Vec<TileResult> = order
                .iter()
                .map(|&i| {
                    let t = small.tiles[i];
                    let rs = t.row_start as usize..(t.row_start + t.rows) as usize;
                    let mt = &pool.store().matrix[i];
                    let w_tile = ws[p].slice(rs.start * din..rs.end * din);
                    block_on(run_tile(o, batch_id(1, k + 1, t.index), t, xs[p].as_slice(), w_tile, KernelArg::Public(&b[rs]), mt)).unwrap()
                })
                .collect();
            assemble(&small, results)
        });
        ensure!(reconstruct_batch(&out).0 == want, "order {order:?} changed the result");
        match &first {
            None => first = Some(out),
            Some(f) => ensure!(*f == out, "order {order:?} changed the output shares"),
        }
    }

    // full runs: one matrix triple per tile
    let g = Arc::new(mpcflow::compile(&linear_layer_ir(64, 32), None, &Default::default()).map_err(|e| e.to_string())?);
    for slice in [64u64, 256, 700, 2048] {
        let cfg = RunConfig { slice, ..RunConfig::default() };
        let tiles = plan_tiles(64, 32, slice).map_err(|e| e.to_string())?.tiles.len();
        let inp = bundle(&g, 5, &mut r);
        let want = interpret(&g, &inp.params).map_err(|e| e.to_string())?.output;
        let stores = deal_for(&g, 2, &inp, slice, 10).map_err(|e| e.to_string())?;
        let run = run_local(g.clone(), stores, &inp, &FaultPlan::none(), IO, &cfg);
        ensure!(run.output().map_err(|e| e.to_string())? == want.as_slice(), "slice {slice}: wrong output");
        for p in &run.parties {
            let used = p.as_ref().unwrap().matrix_consumed;
            ensure!(used == tiles, "slice {slice}: {used} matrix triples for {tiles} tiles");
        }
    }
    Ok("265 tiles (264 x 31 + 8), 6 orders agree, one triple per tile".into())
}

fn c9_party_scaling() -> Outcome {
    let ir = linear_layer_ir(64, 32);
    let mut outputs = Vec::new();
    for n in 2..=6 {
        let (runs, want) = tcp_run(&ir, n, 9, &RunConfig::default())?;
        for r in &runs {
            ensure!(r.output == want, "{n} parties: party {} differs from the oracle", r.report.party);
            ensure!(r.report.per_peer.len() == n - 1, "{n} parties: {} links", r.report.per_peer.len());
            ensure!(r.report.per_peer.iter().all(|p| p.sent > 0 && p.received > 0), "{n} parties: an idle link");
        }
        outputs.push(runs[0].output.clone());
    }
    ensure!(outputs.windows(2).all(|w| w[0] == w[1]), "outputs differ across party counts");
    Ok("n = 2..6 identical, n-1 links each".into())
}

fn c10_determinism() -> Outcome {
    let mut r = rng(10);
    let mut runs = 0;
    for name in FIXTURES {
        let g = graph(name, None);
        let inp = random_inputs(&g, &[], &mut r);
        let mut digests = BTreeSet::new();
        for threads in [1, 2, 8] {
            let cfg = RunConfig { threads, ..RunConfig::default() };
            let rs = run_local_pipeline(Circuit::File { path: &fixture_path(name), entry: None }, &inp, 2, &cfg, 11, &FaultPlan::none(), IO).map_err(|e| format!("{name}: {e}"))?;
            for p in rs {
                digests.insert(p.report.output_digest);
                runs += 1;
            }
        }
        ensure!(digests.len() == 1, "{name}: {} distinct digests", digests.len());
    }
    Ok(format!("{} fixtures, {runs} party runs, one digest each", FIXTURES.len()))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

fn c11_performance() -> Outcome {
    // (a) 1024 x 1024 layer, 1 vs 8 workers, interleaved repetitions
    let g = Arc::new(mpcflow::compile(&linear_layer_ir(1024, 1024), None, &Default::default()).map_err(|e| e.to_string())?);
    let inp = bundle(&g, 5, &mut rng(11));
    let stores = deal_for(&g, 2, &inp, RunConfig::default().slice, 12).map_err(|e| e.to_string())?;
    let mut times: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut out = None;
    for _ in 0..5 {
        for threads in [1, 8] {
            let cfg = RunConfig { threads, ..RunConfig::default() };
            let t = Instant::now();
            let run = run_local(g.clone(), stores.clone(), &inp, &FaultPlan::none(), IO, &cfg);
            let secs = t.elapsed().as_secs_f64();
            let o = run.output().map_err(|e| e.to_string())?.to_vec();
            ensure!(out.get_or_insert_with(|| o.clone()) == &o, "{threads} workers changed the output");
            times.entry(threads).or_default().push(secs);
        }
    }
    let (one, eight) = (median(times[&1].clone()), median(times[&8].clone()));
    let ratio = eight / one;

    // (b) batched add kernel against a loop over single shares
    let lanes = 1 << 20;
    let mut r = rng(13);
    let mk = |r: &mut rand_chacha::ChaCha20Rng| ShareBatch {
        values: (0..lanes).map(|_| Fp::random(r)).collect(),
        macs: (0..lanes).map(|_| Fp::random(r)).collect(),
    };
    let (x, y) = (mk(&mut r), mk(&mut r));
    let xa: Vec<AuthShare> = (0..lanes).map(|i| AuthShare::new(x.values[i], x.macs[i])).collect();
    let ya: Vec<AuthShare> = (0..lanes).map(|i| AuthShare::new(y.values[i], y.macs[i])).collect();
    let cpu = CpuBackend::default();
    let req = KernelRequest { op: KernelOp::Add, args: vec![KernelArg::Shared(x.as_slice()), KernelArg::Shared(y.as_slice())], party: 0, alpha_share: Fp::ONE };
    let (mut batched, mut scalar) = (Vec::new(), Vec::new());
    for _ in 0..7 {
        let t = Instant::now();
        let KernelOutput::Shared(z) = cpu.execute(&req).map_err(|e| e.to_string())? else { return Err("public result".into()) };
        batched.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let s: Vec<AuthShare> = xa.iter().zip(&ya).map(|(&a, &b)| std::hint::black_box(a) + b).collect();
        scalar.push(t.elapsed().as_secs_f64());
        ensure!(z.values[lanes - 1] == s[lanes - 1].value && z.macs[0] == s[0].mac, "kernel and loop disagree");
    }
    let (tb, ts) = (median(batched), median(scalar));
    let detail = format!("1 worker {:.0} ms, 8 workers {:.0} ms, ratio {ratio:.2}; add {:.0} vs {:.0} Mlanes/s", one * 1e3, eight * 1e3, lanes as f64 / tb / 1e6, lanes as f64 / ts / 1e6);
    ensure!(ratio <= 1.10, "8 workers slower than 1 by more than 10%: {detail}");
    ensure!(tb <= ts, "batched kernel below the scalar loop: {detail}");
    Ok(detail)
}

fn c12_stages() -> Outcome {
    let (mut worst_sum, mut worst_wall) = (0f64, 0f64);
    for (din, dout, parties) in [(64, 32, 2), (256, 128, 3)] {
        let t = Instant::now();
        let (runs, _) = tcp_run(&linear_layer_ir(din, dout), parties, 12, &RunConfig::default())?;
        let outer = t.elapsed().as_secs_f64() * 1e3;
        for r in &runs {
            let rep = &r.report;
            ensure!(rep.front_end_ms >= 0.0 && rep.setup_ms >= 0.0 && rep.online_ms >= 0.0, "negative stage in {rep:?}");
            let sum = rep.front_end_ms + rep.setup_ms + rep.online_ms;
            let rel = (sum - rep.total_ms).abs() / rep.total_ms;
            worst_sum = worst_sum.max(rel);
            ensure!(rel <= 0.02, "stages sum to {sum:.3} ms against a {:.3} ms total", rep.total_ms);
            ensure!(rep.total_ms <= outer, "total {:.3} ms exceeds the {outer:.3} ms the call took", rep.total_ms);
            ensure!(rep.output_len == dout as usize && !rep.output_digest.is_empty() && rep.workers >= 1, "incomplete report {rep:?}");
        }
        worst_wall = worst_wall.max(wall_vs_total(din, dout)?);
    }
    ensure!(worst_wall <= 0.02, "report total is off the measured wall-clock by {:.2}%", worst_wall * 100.0);
    Ok(format!("stage sum within {:.4}% of total, total within {:.2}% of wall-clock", worst_sum * 100.0, worst_wall * 100.0))
}

/// Largest relative gap between a party's reported total and the wall
/// clock measured around its `run_party` call.
fn wall_vs_total(din: u32, dout: u32) -> Result<f64, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let circuit = dir.path().join("layer.ll");
    std::fs::write(&circuit, linear_layer_ir(din, dout)).map_err(|e| e.to_string())?;
    let g = mpcflow::pipeline::load_circuit(&circuit, None).map_err(|e| e.to_string())?;
    let inp = bundle(&g, 5, &mut rng(14));
    let inputs = dir.path().join("inputs.bin");
    inp.save(&inputs).map_err(|e| e.to_string())?;
    let stores = deal_for(&g, 2, &inp, RunConfig::default().slice, 15).map_err(|e| e.to_string())?;
    let endpoints = free_ports(2);
    let gaps: Vec<Result<f64, String>> = std::thread::scope(|sc| {
        let hs: Vec<_> = stores
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let triples = dir.path().join(format!("p{i}.triples"));
                std::fs::write(&triples, s.to_bytes()).unwrap();
                let spec = PartySpec {
                    circuit: circuit.clone(),
                    entry: None,
                    party: i,
                    endpoints: endpoints.clone(),
                    triples,
                    inputs: Some(inputs.clone()),
                    connect_timeout: IO,
                    io_timeout: IO,
                    cfg: RunConfig::default(),
                };
                sc.spawn(move || {
                    let t = Instant::now();
                    let run = run_party(&spec).map_err(|e| e.to_string())?;
                    let wall = t.elapsed().as_secs_f64() * 1e3;
                    Ok((wall - run.report.total_ms).abs() / wall)
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    gaps.into_iter().try_fold(0f64, |m, g| Ok(m.max(g?)))
}
