mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use mpcflow::backend::*;
use mpcflow::spdz::{reconstruct_batch, share_vector, ShareBatch};
use mpcflow::Fp;
use proptest::prelude::*;
use rand::Rng;

/// Runs `op` for every party and reconstructs.
fn run_all(cpu: &CpuBackend, op: KernelOp, alpha_shares: &[Fp], args: impl Fn(usize) -> Vec<KernelArg<'static>>) -> (Vec<Fp>, Vec<Fp>) {
    let outs: Vec<ShareBatch> = (0..alpha_shares.len())
        .map(|p| {
            let req = KernelRequest { op, args: args(p), party: p, alpha_share: alpha_shares[p] };
            match cpu.execute(&req).unwrap() {
                KernelOutput::Shared(s) => s,
                KernelOutput::Public(_) => panic!("expected shares"),
            }
        })
        .collect();
    reconstruct_batch(&outs)
}

fn leak<T>(v: T) -> &'static T {
    Box::leak(Box::new(v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_compute_on_shares(n in 1usize..300, parties in 2usize..5, chunk in 1usize..70, seed: u64) {
        let mut r = rng(seed);
        let alpha = Fp::random(&mut r);
        let als = mpcflow::spdz::additive_shares(alpha, parties, &mut r);
        let x: Vec<Fp> = (0..n).map(|_| Fp::random(&mut r)).collect();
        let y: Vec<Fp> = (0..n).map(|_| Fp::random(&mut r)).collect();
        let k: &'static [Fp] = leak((0..n).map(|_| Fp::random(&mut r)).collect::<Vec<_>>());
        let xs = leak(share_vector(&x, alpha, parties, &mut r));
        let ys = leak(share_vector(&y, alpha, parties, &mut r));
        let cpu = CpuBackend::with_chunk(chunk);
        let mac_ok = |(v, m): &(Vec<Fp>, Vec<Fp>)| v.iter().zip(m).all(|(&v, &m)| m == alpha * v);

        let sh = |b: &'static [ShareBatch], p: usize| KernelArg::Shared(b[p].as_slice());
        let cases: Vec<(KernelOp, Box<dyn Fn(usize) -> Vec<KernelArg<'static>>>, Vec<Fp>)> = vec![
            (KernelOp::Add, Box::new(|p| vec![sh(xs, p), sh(ys, p)]), x.iter().zip(&y).map(|(&a, &b)| a + b).collect()),
            (KernelOp::Sub, Box::new(|p| vec![sh(xs, p), sh(ys, p)]), x.iter().zip(&y).map(|(&a, &b)| a - b).collect()),
            (KernelOp::Add, Box::new(|p| vec![sh(xs, p), KernelArg::Public(k)]), x.iter().zip(k).map(|(&a, &b)| a + b).collect()),
            (KernelOp::Add, Box::new(|p| vec![KernelArg::Public(k), sh(xs, p)]), x.iter().zip(k).map(|(&a, &b)| a + b).collect()),
            (KernelOp::Sub, Box::new(|p| vec![sh(xs, p), KernelArg::Public(k)]), x.iter().zip(k).map(|(&a, &b)| a - b).collect()),
            (KernelOp::Sub, Box::new(|p| vec![KernelArg::Public(k), sh(xs, p)]), x.iter().zip(k).map(|(&a, &b)| b - a).collect()),
            (KernelOp::Mul, Box::new(|p| vec![sh(xs, p), KernelArg::Public(k)]), x.iter().zip(k).map(|(&a, &b)| a * b).collect()),
            (KernelOp::ReduceAdd, Box::new(|p| vec![sh(xs, p)]), vec![x.iter().copied().sum()]),
        ];
        for (op, args, want) in cases {
            let got = run_all(&cpu, op, &als, args);
            prop_assert_eq!(&got.0, &want, "{:?}", op);
            prop_assert!(mac_ok(&got));
        }
    }

    #[test]
    fn beaver_combine_gives_the_product(n in 1usize..100, parties in 2usize..4, seed: u64) {
        let mut r = rng(seed);
        let alpha = Fp::random(&mut r);
        let als = mpcflow::spdz::additive_shares(alpha, parties, &mut r);
        let rv = |r: &mut rand_chacha::ChaCha20Rng| (0..n).map(|_| Fp::random(r)).collect::<Vec<_>>();
        let (x, y, a, b) = (rv(&mut r), rv(&mut r), rv(&mut r), rv(&mut r));
        let c: Vec<Fp> = a.iter().zip(&b).map(|(&a, &b)| a * b).collect();
        let d: &'static [Fp] = leak(x.iter().zip(&a).map(|(&x, &a)| x - a).collect::<Vec<_>>());
        let e: &'static [Fp] = leak(y.iter().zip(&b).map(|(&y, &b)| y - b).collect::<Vec<_>>());
        let (as_, bs, cs) = (leak(share_vector(&a, alpha, parties, &mut r)), leak(share_vector(&b, alpha, parties, &mut r)), leak(share_vector(&c, alpha, parties, &mut r)));
        let got = run_all(&CpuBackend::default(), KernelOp::BeaverCombine, &als, |p| {
            vec![KernelArg::Shared(as_[p].as_slice()), KernelArg::Shared(bs[p].as_slice()), KernelArg::Shared(cs[p].as_slice()), KernelArg::Public(d), KernelArg::Public(e)]
        });
        prop_assert_eq!(&got.0, &x.iter().zip(&y).map(|(&a, &b)| a * b).collect::<Vec<_>>());
        prop_assert!(got.0.iter().zip(&got.1).all(|(&v, &m)| m == alpha * v));
    }
}

#[test]
fn public_only_kernels_stay_public() {
    let a = [Fp::new(3), Fp::new(4)];
    let b = [Fp::new(5), Fp::new(6)];
    let cpu = CpuBackend::default();
    let req = KernelRequest { op: KernelOp::Mul, args: vec![KernelArg::Public(&a), KernelArg::Public(&b)], party: 1, alpha_share: Fp::ONE };
    assert_eq!(cpu.execute(&req).unwrap(), KernelOutput::Public(vec![Fp::new(15), Fp::new(24)]));
}

#[test]
fn bad_operands_are_rejected() {
    let s = ShareBatch::zeros(3);
    let t = ShareBatch::zeros(2);
    let cpu = CpuBackend::default();
    let req = |op, args| KernelRequest { op, args, party: 0, alpha_share: Fp::ONE };
    let mismatch = req(KernelOp::Add, vec![KernelArg::Shared(s.as_slice()), KernelArg::Shared(t.as_slice())]);
    assert_eq!(cpu.execute(&mismatch), Err(BackendError::LaneMismatch { op: KernelOp::Add, left: 3, right: 2 }));
    let secret_mul = req(KernelOp::Mul, vec![KernelArg::Shared(s.as_slice()), KernelArg::Shared(s.as_slice())]);
    assert!(matches!(cpu.execute(&secret_mul), Err(BackendError::BadOperands { op: KernelOp::Mul, .. })));
    let one = req(KernelOp::Sub, vec![KernelArg::Shared(s.as_slice())]);
    assert!(matches!(cpu.execute(&one), Err(BackendError::BadOperands { .. })));
}

/// Counts the kernels routed to it and computes them on the CPU.
struct Counting {
    cap: BackendCapability,
    inner: CpuBackend,
    calls: AtomicUsize,
}

impl Backend for Counting {
    fn capability(&self) -> &BackendCapability {
        &self.cap
    }

    fn execute(&self, req: &KernelRequest<'_>) -> Result<KernelOutput, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.execute(req)
    }
}

#[test]
fn large_kernels_are_routed_to_a_registered_accelerator() {
    let acc = Arc::new(Counting {
        cap: BackendCapability { name: "counting".into(), min_kernel_size: 10_000, threads_per_block: Some(256) },
        inner: CpuBackend::default(),
        calls: AtomicUsize::new(0),
    });
    let mut set = BackendSet::default();
    set.register(acc.clone());
    assert_eq!(set.select(MIN_KERNEL_SIZE - 1).capability().name, "cpu");
    assert_eq!(set.select(MIN_KERNEL_SIZE).capability().name, "cpu");
    assert_eq!(set.select(10_000).capability().name, "counting");
    let mut r = rng(1);
    let (a, b): (Vec<Fp>, Vec<Fp>) = (0..20_000).map(|_| (Fp::random(&mut r), Fp::new(r.gen_range(0..9)))).unzip();
    let s = ShareBatch { values: a.clone(), macs: a };
    let req = KernelRequest { op: KernelOp::Mul, args: vec![KernelArg::Shared(s.as_slice()), KernelArg::Public(&b)], party: 0, alpha_share: Fp::ONE };
    assert_eq!(set.execute(&req).unwrap(), CpuBackend::default().execute(&req).unwrap());
    assert_eq!(acc.calls.load(Ordering::Relaxed), 1);
    let small = KernelRequest { op: KernelOp::ReduceAdd, args: vec![KernelArg::Public(&b[..10])], party: 0, alpha_share: Fp::ONE };
    set.execute(&small).unwrap();
    assert_eq!(acc.calls.load(Ordering::Relaxed), 1);
}
