//! Local share arithmetic. The runtime hands every element-wise kernel to
//! a [`Backend`]; the CPU implementation walks values and MACs in one
//! fused pass, chunk by chunk.

use std::sync::Arc;

use crate::field::Fp;
use crate::spdz::{ShareBatch, ShareSlice};

/// Kernels below this many lanes always run on the CPU path.
pub const MIN_KERNEL_SIZE: usize = 4096;
pub const DEFAULT_CHUNK: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelOp {
    Add,
    Sub,
    /// Element-wise product where at least one side is public.
    Mul,
    ReduceAdd,
    /// Beaver recombination; arguments `[a, b, c, d, e]` with `d`, `e`
    /// public.
    BeaverCombine,
}

#[derive(Clone, Copy, Debug)]
pub enum KernelArg<'a> {
    Shared(ShareSlice<'a>),
    Public(&'a [Fp]),
}

impl KernelArg<'_> {
    pub fn len(&self) -> usize {
        match self {
            KernelArg::Shared(s) => s.len(),
            KernelArg::Public(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct KernelRequest<'a> {
    pub op: KernelOp,
    pub args: Vec<KernelArg<'a>>,
    pub party: usize,
    pub alpha_share: Fp,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KernelOutput {
    Shared(ShareBatch),
    Public(Vec<Fp>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("{op:?}: operand lane counts differ ({left} vs {right})")]
    LaneMismatch { op: KernelOp, left: usize, right: usize },
    #[error("{op:?}: bad operands ({reason})")]
    BadOperands { op: KernelOp, reason: &'static str },
    #[error("backend {0} has no kernel implementation")]
    Unavailable(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackendCapability {
    pub name: String,
    /// Smallest lane count worth routing here.
    pub min_kernel_size: usize,
    pub threads_per_block: Option<u32>,
}

pub trait Backend: Send + Sync {
    fn capability(&self) -> &BackendCapability;
    fn execute(&self, req: &KernelRequest<'_>) -> Result<KernelOutput, BackendError>;
}

pub struct CpuBackend {
    cap: BackendCapability,
    chunk: usize,
}

impl Default for CpuBackend {
    fn default() -> Self {
        CpuBackend::with_chunk(DEFAULT_CHUNK)
    }
}

impl CpuBackend {
    pub fn with_chunk(chunk: usize) -> CpuBackend {
        CpuBackend {
            cap: BackendCapability { name: "cpu".into(), min_kernel_size: 1, threads_per_block: None },
            chunk: chunk.max(1),
        }
    }

    fn binary(&self, req: &KernelRequest<'_>) -> Result<KernelOutput, BackendError> {
        let op = req.op;
        let [x, y] = req.args[..] else {
            return Err(BackendError::BadOperands { op, reason: "expected two operands" });
        };
        if x.len() != y.len() {
            return Err(BackendError::LaneMismatch { op, left: x.len(), right: y.len() });
        }
        let n = x.len();
        let (party, al) = (req.party, req.alpha_share);
        use KernelArg::{Public, Shared};
        let mut out = ShareBatch::zeros(n);
        match (op, x, y) {
            (_, Public(a), Public(b)) => {
                let f: fn(Fp, Fp) -> Fp = match op {
                    KernelOp::Add => |a, b| a + b,
                    KernelOp::Sub => |a, b| a - b,
                    _ => |a, b| a * b,
                };
                return Ok(KernelOutput::Public(a.iter().zip(b).map(|(&a, &b)| f(a, b)).collect()));
            }
            (KernelOp::Add | KernelOp::Sub, Shared(a), Shared(b)) => {
                let neg = op == KernelOp::Sub;
                self.chunks(n, |r| {
                    let (ov, om) = (&mut out.values[r.clone()], &mut out.macs[r.clone()]);
                    let (av, am, bv, bm) = (&a.values[r.clone()], &a.macs[r.clone()], &b.values[r.clone()], &b.macs[r.clone()]);
                    for i in 0..ov.len() {
                        if neg {
                            ov[i] = av[i] - bv[i];
                            om[i] = am[i] - bm[i];
                        } else {
                            ov[i] = av[i] + bv[i];
                            om[i] = am[i] + bm[i];
                        }
                    }
                });
            }
            (KernelOp::Add | KernelOp::Sub, Shared(s), Public(k)) | (KernelOp::Add, Public(k), Shared(s)) => {
                // x - k is x + (-k)
                let sign = if op == KernelOp::Sub { -Fp::ONE } else { Fp::ONE };
                self.chunks(n, |r| {
                    for i in r {
                        let k = sign * k[i];
                        out.values[i] = if party == 0 { s.values[i] + k } else { s.values[i] };
                        out.macs[i] = s.macs[i] + al * k;
                    }
                });
            }
            (KernelOp::Sub, Public(k), Shared(s)) => {
                self.chunks(n, |r| {
                    for i in r {
                        out.values[i] = if party == 0 { k[i] - s.values[i] } else { -s.values[i] };
                        out.macs[i] = al * k[i] - s.macs[i];
                    }
                });
            }
            (KernelOp::Mul, Shared(s), Public(k)) | (KernelOp::Mul, Public(k), Shared(s)) => {
                self.chunks(n, |r| {
                    for i in r {
                        out.values[i] = s.values[i] * k[i];
                        out.macs[i] = s.macs[i] * k[i];
                    }
                });
            }
            (KernelOp::Mul, Shared(_), Shared(_)) => {
                return Err(BackendError::BadOperands { op, reason: "secret-by-secret products need a Beaver triple" })
            }
            _ => return Err(BackendError::BadOperands { op, reason: "not a binary kernel" }),
        }
        Ok(KernelOutput::Shared(out))
    }

    fn chunks(&self, n: usize, mut f: impl FnMut(std::ops::Range<usize>)) {
        let mut start = 0;
        while start < n {
            let end = (start + self.chunk).min(n);
            f(start..end);
            start = end;
        }
    }

    fn reduce_add(&self, req: &KernelRequest<'_>) -> Result<KernelOutput, BackendError> {
        match req.args[..] {
            [KernelArg::Public(p)] => Ok(KernelOutput::Public(vec![p.iter().copied().sum()])),
            [KernelArg::Shared(s)] => {
                let mut acc = (Fp::ZERO, Fp::ZERO);
                self.chunks(s.len(), |r| {
                    acc.0 += s.values[r.clone()].iter().copied().sum::<Fp>();
                    acc.1 += s.macs[r].iter().copied().sum::<Fp>();
                });
                Ok(KernelOutput::Shared(ShareBatch { values: vec![acc.0], macs: vec![acc.1] }))
            }
            _ => Err(BackendError::BadOperands { op: KernelOp::ReduceAdd, reason: "expected one operand" }),
        }
    }

    fn beaver_combine(&self, req: &KernelRequest<'_>) -> Result<KernelOutput, BackendError> {
        use KernelArg::{Public, Shared};
        let op = KernelOp::BeaverCombine;
        let [Shared(a), Shared(b), Shared(c), Public(d), Public(e)] = req.args[..] else {
            return Err(BackendError::BadOperands { op, reason: "expected [a, b, c, d, e]" });
        };
        let n = a.len();
        if let Some(bad) = [b.len(), c.len(), d.len(), e.len()].into_iter().find(|&l| l != n) {
            return Err(BackendError::LaneMismatch { op, left: n, right: bad });
        }
        let (party, al) = (req.party, req.alpha_share);
        let mut out = ShareBatch::zeros(n);
        self.chunks(n, |r| {
            for i in r {
                let de = d[i] * e[i];
                let v = c.values[i] + d[i] * b.values[i] + e[i] * a.values[i];
                out.values[i] = if party == 0 { v + de } else { v };
                out.macs[i] = c.macs[i] + d[i] * b.macs[i] + e[i] * a.macs[i] + al * de;
            }
        });
        Ok(KernelOutput::Shared(out))
    }
}

impl Backend for CpuBackend {
    fn capability(&self) -> &BackendCapability {
        &self.cap
    }

    fn execute(&self, req: &KernelRequest<'_>) -> Result<KernelOutput, BackendError> {
        match req.op {
            KernelOp::Add | KernelOp::Sub | KernelOp::Mul => self.binary(req),
            KernelOp::ReduceAdd => self.reduce_add(req),
            KernelOp::BeaverCombine => self.beaver_combine(req),
        }
    }
}

/// Capability record for an accelerator with no kernels behind it.
#[cfg(feature = "gpu-stub")]
pub struct GpuStub {
    cap: BackendCapability,
}

#[cfg(feature = "gpu-stub")]
impl Default for GpuStub {
    fn default() -> Self {
        GpuStub {
            cap: BackendCapability { name: "gpu-stub".into(), min_kernel_size: MIN_KERNEL_SIZE, threads_per_block: Some(1024) },
        }
    }
}

#[cfg(feature = "gpu-stub")]
impl Backend for GpuStub {
    fn capability(&self) -> &BackendCapability {
        &self.cap
    }

    fn execute(&self, _req: &KernelRequest<'_>) -> Result<KernelOutput, BackendError> {
        Err(BackendError::Unavailable(self.cap.name.clone()))
    }
}

/// Registered backends with the CPU as the fallback.
#[derive(Clone)]
pub struct BackendSet {
    cpu: Arc<dyn Backend>,
    accel: Vec<Arc<dyn Backend>>,
}

impl Default for BackendSet {
    fn default() -> Self {
        BackendSet::cpu_only(Arc::new(CpuBackend::default()))
    }
}

impl BackendSet {
    pub fn cpu_only(cpu: Arc<dyn Backend>) -> BackendSet {
        BackendSet { cpu, accel: Vec::new() }
    }

    pub fn register(&mut self, b: Arc<dyn Backend>) {
        self.accel.push(b);
    }

    /// The backend a kernel of `lanes` lanes is routed to.
    pub fn select(&self, lanes: usize) -> &Arc<dyn Backend> {
        select_backend(&self.cpu, &self.accel, lanes)
    }

    pub fn execute(&self, req: &KernelRequest<'_>) -> Result<KernelOutput, BackendError> {
        let lanes = req.args.iter().map(|a| a.len()).max().unwrap_or(0);
        self.select(lanes).execute(req)
    }
}

pub fn select_backend<'a>(cpu: &'a Arc<dyn Backend>, accel: &'a [Arc<dyn Backend>], lanes: usize) -> &'a Arc<dyn Backend> {
    if lanes < MIN_KERNEL_SIZE {
        return cpu;
    }
    accel.iter().find(|b| lanes >= b.capability().min_kernel_size).unwrap_or(cpu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req<'a>(op: KernelOp, args: Vec<KernelArg<'a>>, party: usize) -> KernelRequest<'a> {
        KernelRequest { op, args, party, alpha_share: Fp::new(7) }
    }

    #[test]
    fn public_constant_rule() {
        let s = ShareBatch { values: vec![Fp::new(10)], macs: vec![Fp::new(100)] };
        let k = [Fp::new(3)];
        let cpu = CpuBackend::default();
        let p0 = cpu.execute(&req(KernelOp::Add, vec![KernelArg::Shared(s.as_slice()), KernelArg::Public(&k)], 0)).unwrap();
        let p1 = cpu.execute(&req(KernelOp::Add, vec![KernelArg::Shared(s.as_slice()), KernelArg::Public(&k)], 1)).unwrap();
        assert_eq!(p0, KernelOutput::Shared(ShareBatch { values: vec![Fp::new(13)], macs: vec![Fp::new(121)] }));
        assert_eq!(p1, KernelOutput::Shared(ShareBatch { values: vec![Fp::new(10)], macs: vec![Fp::new(121)] }));
    }

    #[test]
    fn lane_mismatch() {
        let cpu = CpuBackend::default();
        let (a, b) = ([Fp::ONE; 2], [Fp::ONE; 3]);
        let r = cpu.execute(&req(KernelOp::Add, vec![KernelArg::Public(&a), KernelArg::Public(&b)], 0));
        assert!(matches!(r, Err(BackendError::LaneMismatch { left: 2, right: 3, .. })));
    }

    #[test]
    fn small_kernels_route_to_cpu() {
        struct Fake(BackendCapability);
        impl Backend for Fake {
            fn capability(&self) -> &BackendCapability {
                &self.0
            }
            fn execute(&self, _: &KernelRequest<'_>) -> Result<KernelOutput, BackendError> {
                Err(BackendError::Unavailable("fake".into()))
            }
        }
        let mut set = BackendSet::default();
        set.register(Arc::new(Fake(BackendCapability { name: "fake".into(), min_kernel_size: MIN_KERNEL_SIZE, threads_per_block: None })));
        assert_eq!(set.select(MIN_KERNEL_SIZE - 1).capability().name, "cpu");
        assert_eq!(set.select(MIN_KERNEL_SIZE).capability().name, "fake");
    }
}
