//! Per-party preprocessing material and its `MPCT` file format.
//!
//! Layout (little-endian): `"MPCT"`, version u32, prime u64, party u32,
//! parties u32, MAC key share u32, scalar triple count u64 followed by the
//! six planes `a.v a.m b.v b.m c.v c.m`, matrix triple count u32 with
//! `rows cols` and the six planes per triple, then the input masks.

use std::sync::atomic::{AtomicBool, Ordering};

use super::share::{ShareBatch, ShareSlice};
use super::SpdzError;
use crate::field::{Fp, P};

pub const STORE_MAGIC: &[u8; 4] = b"MPCT";
pub const STORE_VERSION: u32 = 1;

/// Scalar Beaver triples in structure-of-arrays form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScalarTriples {
    pub a: ShareBatch,
    pub b: ShareBatch,
    pub c: ShareBatch,
}

impl ScalarTriples {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Borrowed run of scalar triples.
#[derive(Clone, Copy, Debug)]
pub struct TripleSlice<'a> {
    pub a: ShareSlice<'a>,
    pub b: ShareSlice<'a>,
    pub c: ShareSlice<'a>,
}

/// `C = A * B` for a `rows x cols` matrix `A` (row-major) and a
/// `cols`-vector `B`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixTriple {
    pub rows: u32,
    pub cols: u32,
    pub a: ShareBatch,
    pub b: ShareBatch,
    pub c: ShareBatch,
}

/// Mask shares for one input parameter. The owner also holds the mask in
/// the clear. Public parameters carry no mask, only the owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputMask {
    pub name: String,
    pub owner: u32,
    pub private: bool,
    pub shares: ShareBatch,
    pub clear: Option<Vec<Fp>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripleStore {
    pub party: u32,
    pub parties: u32,
    pub alpha_share: Fp,
    pub scalar: ScalarTriples,
    pub matrix: Vec<MatrixTriple>,
    pub masks: Vec<InputMask>,
}

impl TripleStore {
    pub fn mask(&self, name: &str) -> Option<&InputMask> {
        self.masks.iter().find(|m| m.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(STORE_MAGIC);
        put32(&mut w, STORE_VERSION);
        w.extend_from_slice(&(P as u64).to_le_bytes());
        put32(&mut w, self.party);
        put32(&mut w, self.parties);
        put32(&mut w, self.alpha_share.value());
        w.extend_from_slice(&(self.scalar.len() as u64).to_le_bytes());
        for b in [&self.scalar.a, &self.scalar.b, &self.scalar.c] {
            put_batch(&mut w, b);
        }
        put32(&mut w, self.matrix.len() as u32);
        for m in &self.matrix {
            put32(&mut w, m.rows);
            put32(&mut w, m.cols);
            for b in [&m.a, &m.b, &m.c] {
                put_batch(&mut w, b);
            }
        }
        put32(&mut w, self.masks.len() as u32);
        for m in &self.masks {
            put32(&mut w, m.name.len() as u32);
            w.extend_from_slice(m.name.as_bytes());
            put32(&mut w, m.owner);
            w.push(m.private as u8);
            w.extend_from_slice(&(m.shares.len() as u64).to_le_bytes());
            put_batch(&mut w, &m.shares);
            match &m.clear {
                Some(c) => {
                    w.push(1);
                    c.iter().for_each(|v| put32(&mut w, v.value()));
                }
                None => w.push(0),
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TripleStore, SpdzError> {
        let mut r = Rd { b: bytes, pos: 0 };
        if r.take(4)? != STORE_MAGIC {
            return Err(SpdzError::StoreVersionMismatch("bad magic".into()));
        }
        let v = r.u32()?;
        if v != STORE_VERSION {
            return Err(SpdzError::StoreVersionMismatch(format!("found version {v}")));
        }
        let p = r.u64()?;
        if p != P as u64 {
            return Err(SpdzError::StoreVersionMismatch(format!("store is for prime {p}")));
        }
        let party = r.u32()?;
        let parties = r.u32()?;
        let alpha_share = r.fp()?;
        let ns = r.u64()? as usize;
        let ns = r.fits(ns, 24)?;
        let scalar = ScalarTriples { a: r.batch(ns)?, b: r.batch(ns)?, c: r.batch(ns)? };
        let nm = r.len(8)?;
        let mut matrix = Vec::with_capacity(nm);
        for _ in 0..nm {
            let rows = r.u32()?;
            let cols = r.u32()?;
            let ac = (rows as usize).checked_mul(cols as usize).ok_or_else(|| corrupt("matrix size overflow"))?;
            matrix.push(MatrixTriple { rows, cols, a: r.batch(ac)?, b: r.batch(cols as usize)?, c: r.batch(rows as usize)? });
        }
        let nk = r.len(17)?;
        let mut masks = Vec::with_capacity(nk);
        for _ in 0..nk {
            let len = r.len(1)?;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| corrupt("mask name is not UTF-8"))?;
            let owner = r.u32()?;
            let private = r.take(1)?[0] != 0;
            let n = r.u64()? as usize;
            let shares = r.batch(n)?;
            let clear = match r.take(1)?[0] {
                0 => None,
                _ => Some(r.fps(n)?),
            };
            masks.push(InputMask { name, owner, private, shares, clear });
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(TripleStore { party, parties, alpha_share, scalar, matrix, masks })
    }
}

fn put32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_batch(w: &mut Vec<u8>, b: &ShareBatch) {
    for v in b.values.iter().chain(&b.macs) {
        put32(w, v.value());
    }
}

fn corrupt(m: &str) -> SpdzError {
    SpdzError::StoreCorrupt(m.to_string())
}

struct Rd<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Rd<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], SpdzError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, SpdzError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SpdzError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, min_elem: usize) -> Result<usize, SpdzError> {
        let n = self.u32()? as usize;
        self.fits(n, min_elem)
    }
    fn fits(&self, n: usize, min_elem: usize) -> Result<usize, SpdzError> {
        if n.saturating_mul(min_elem) > self.b.len() - self.pos {
            return Err(corrupt("length prefix exceeds file size"));
        }
        Ok(n)
    }
    fn fp(&mut self) -> Result<Fp, SpdzError> {
        Fp::from_canonical(self.u32()?).ok_or_else(|| corrupt("non-canonical field element"))
    }
    fn fps(&mut self, n: usize) -> Result<Vec<Fp>, SpdzError> {
        if n.saturating_mul(4) > self.b.len() - self.pos {
            return Err(corrupt("truncated"));
        }
        (0..n).map(|_| self.fp()).collect()
    }
    fn batch(&mut self, n: usize) -> Result<ShareBatch, SpdzError> {
        Ok(ShareBatch { values: self.fps(n)?, macs: self.fps(n)? })
    }
}

/// Claim tracking over a store: every triple is handed out at most once.
pub struct TriplePool {
    store: TripleStore,
    scalar_used: Vec<AtomicBool>,
    matrix_used: Vec<AtomicBool>,
}

impl TriplePool {
    pub fn new(store: TripleStore) -> TriplePool {
        let scalar_used = (0..store.scalar.len()).map(|_| AtomicBool::new(false)).collect();
        let matrix_used = (0..store.matrix.len()).map(|_| AtomicBool::new(false)).collect();
        TriplePool { store, scalar_used, matrix_used }
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    pub fn scalar_len(&self) -> usize {
        self.scalar_used.len()
    }

    pub fn matrix_len(&self) -> usize {
        self.matrix_used.len()
    }

    pub fn scalar_consumed(&self) -> usize {
        self.scalar_used.iter().filter(|u| u.load(Ordering::Relaxed)).count()
    }

    pub fn matrix_consumed(&self) -> usize {
        self.matrix_used.iter().filter(|u| u.load(Ordering::Relaxed)).count()
    }

    /// Claims scalar triples `offset..offset + count`.
    pub fn claim_scalar(&self, offset: usize, count: usize) -> Result<TripleSlice<'_>, SpdzError> {
        let end = offset + count;
        if end > self.scalar_used.len() {
            return Err(SpdzError::TripleExhausted { index: end.saturating_sub(1), available: self.scalar_used.len() });
        }
        for (i, u) in self.scalar_used[offset..end].iter().enumerate() {
            if u.swap(true, Ordering::AcqRel) {
                return Err(SpdzError::TripleExhausted { index: offset + i, available: self.scalar_used.len() });
            }
        }
        let s = &self.store.scalar;
        Ok(TripleSlice { a: s.a.slice(offset..end), b: s.b.slice(offset..end), c: s.c.slice(offset..end) })
    }

    /// Claims matrix triple `index`, which must be `rows x cols`.
    pub fn claim_matrix(&self, index: usize, rows: u32, cols: u32) -> Result<&MatrixTriple, SpdzError> {
        let t = self
            .store
            .matrix
            .get(index)
            .ok_or(SpdzError::TripleExhausted { index, available: self.matrix_used.len() })?;
        if (t.rows, t.cols) != (rows, cols) {
            return Err(SpdzError::TripleShapeMismatch { index, want: (rows, cols), have: (t.rows, t.cols) });
        }
        if self.matrix_used[index].swap(true, Ordering::AcqRel) {
            return Err(SpdzError::TripleExhausted { index, available: self.matrix_used.len() });
        }
        Ok(t)
    }
}
