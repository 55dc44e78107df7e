//! Trusted-dealer stand-in for the offline phase.

use rand::Rng;

use super::share::ShareBatch;
use super::store::{InputMask, MatrixTriple, ScalarTriples, TripleStore};
use crate::field::Fp;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskRequest {
    pub name: String,
    pub owner: u32,
    pub private: bool,
    pub len: usize,
}

/// Preprocessing demand: scalar triples, matrix triples in consumption
/// order, and one entry per input parameter.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DealerRequest {
    pub scalar: usize,
    pub matrix: Vec<(u32, u32)>,
    pub inputs: Vec<MaskRequest>,
}

/// Appends an authenticated sharing of `x` to each party's batch.
fn deal<R: Rng + ?Sized>(x: Fp, alpha: Fp, out: &mut [ShareBatch], rng: &mut R) {
    let n = out.len();
    let (mut vs, mut ms) = (Fp::ZERO, Fp::ZERO);
    for b in out.iter_mut().skip(1) {
        let (v, m) = (Fp::random(rng), Fp::random(rng));
        vs += v;
        ms += m;
        b.values.push(v);
        b.macs.push(m);
    }
    if n > 0 {
        out[0].values.push(x - vs);
        out[0].macs.push(alpha * x - ms);
    }
}

/// Generates consistent stores for `n` parties under a fresh MAC key.
pub fn fake_dealer<R: Rng + ?Sized>(n: usize, req: &DealerRequest, rng: &mut R) -> Vec<TripleStore> {
    let alpha = Fp::random(rng);
    fake_dealer_with_key(n, alpha, req, rng)
}

pub fn fake_dealer_with_key<R: Rng + ?Sized>(n: usize, alpha: Fp, req: &DealerRequest, rng: &mut R) -> Vec<TripleStore> {
    let alpha_shares = super::share::additive_shares(alpha, n, rng);
    let batches = |k: usize| vec![ShareBatch::with_capacity(k); n];

    let (mut a, mut b, mut c) = (batches(req.scalar), batches(req.scalar), batches(req.scalar));
    for _ in 0..req.scalar {
        let (x, y) = (Fp::random(rng), Fp::random(rng));
        deal(x, alpha, &mut a, rng);
        deal(y, alpha, &mut b, rng);
        deal(x * y, alpha, &mut c, rng);
    }

    let mut matrix: Vec<Vec<MatrixTriple>> = vec![Vec::with_capacity(req.matrix.len()); n];
    for &(rows, cols) in &req.matrix {
        let (r, k) = (rows as usize, cols as usize);
        let am: Vec<Fp> = (0..r * k).map(|_| Fp::random(rng)).collect();
        let bv: Vec<Fp> = (0..k).map(|_| Fp::random(rng)).collect();
        let cv: Vec<Fp> = am.chunks_exact(k.max(1)).take(r).map(|row| row.iter().zip(&bv).map(|(&x, &y)| x * y).sum()).collect();
        let (mut sa, mut sb, mut sc) = (batches(r * k), batches(k), batches(r));
        am.iter().for_each(|&x| deal(x, alpha, &mut sa, rng));
        bv.iter().for_each(|&x| deal(x, alpha, &mut sb, rng));
        cv.iter().for_each(|&x| deal(x, alpha, &mut sc, rng));
        for (p, ((a, b), c)) in sa.into_iter().zip(sb).zip(sc).enumerate() {
            matrix[p].push(MatrixTriple { rows, cols, a, b, c });
        }
    }

    let mut masks: Vec<Vec<InputMask>> = vec![Vec::new(); n];
    for m in &req.inputs {
        let len = if m.private { m.len } else { 0 };
        let clear: Vec<Fp> = (0..len).map(|_| Fp::random(rng)).collect();
        let mut sh = batches(len);
        clear.iter().for_each(|&x| deal(x, alpha, &mut sh, rng));
        for (p, shares) in sh.into_iter().enumerate() {
            let own = p as u32 == m.owner && m.private;
            masks[p].push(InputMask {
                name: m.name.clone(),
                owner: m.owner,
                private: m.private,
                shares,
                clear: own.then(|| clear.clone()),
            });
        }
    }

    let mut out = Vec::with_capacity(n);
    let mut matrix = matrix.into_iter();
    let mut masks = masks.into_iter();
    let mut abc = a.into_iter().zip(b).zip(c);
    for (p, &alpha_share) in alpha_shares.iter().enumerate() {
        let ((a, b), c) = abc.next().unwrap();
        out.push(TripleStore {
            party: p as u32,
            parties: n as u32,
            alpha_share,
            scalar: ScalarTriples { a, b, c },
            matrix: matrix.next().unwrap(),
            masks: masks.next().unwrap(),
        });
    }
    out
}
