//! Online-phase primitives bound to one party's session: opening,
//! Beaver multiplication, input sharing and the batched MAC check.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::share::{ShareBatch, ShareSlice};
use super::store::{InputMask, TripleSlice};
use super::{SpdzError, CHECK_NODE};

/// Message id of the end-of-run check.
pub const FINAL_CHECK: u64 = (CHECK_NODE as u64) << 44 | 0xF_FFFF;
use crate::backend::{BackendSet, KernelArg, KernelOp, KernelOutput, KernelRequest};
use crate::field::{words_to_field, Fp};
use crate::net::{MsgType, NetError, Session};

struct Opened {
    values: Vec<Fp>,
    macs: Vec<Fp>,
}

pub struct Online {
    session: Arc<Session>,
    alpha_share: Fp,
    backends: BackendSet,
    /// Opened values awaiting a MAC check, keyed by batch id.
    log: Mutex<BTreeMap<u64, Opened>>,
    opened_total: AtomicU64,
    checks: AtomicU64,
    rng: Mutex<ChaCha20Rng>,
}

impl Online {
    pub fn new(session: Arc<Session>, alpha_share: Fp, backends: BackendSet, seed: u64) -> Online {
        let seed = seed ^ (session.party() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Online {
            session,
            alpha_share,
            backends,
            log: Mutex::new(BTreeMap::new()),
            opened_total: AtomicU64::new(0),
            checks: AtomicU64::new(0),
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
        }
    }

    pub fn party(&self) -> usize {
        self.session.party()
    }

    pub fn parties(&self) -> usize {
        self.session.parties()
    }

    pub fn session(&self) -> &Arc<Session> {
        &self.session
    }

    pub fn alpha_share(&self) -> Fp {
        self.alpha_share
    }

    pub fn backends(&self) -> &BackendSet {
        &self.backends
    }

    /// Values opened so far, checked or not.
    pub fn opened_total(&self) -> u64 {
        self.opened_total.load(Ordering::Relaxed)
    }

    pub fn checks_run(&self) -> u64 {
        self.checks.load(Ordering::Relaxed)
    }

    /// Values opened but not yet covered by a MAC check.
    pub fn unchecked(&self) -> usize {
        self.log.lock().unwrap().values().map(|o| o.values.len()).sum()
    }

    pub fn kernel(&self, op: KernelOp, args: Vec<KernelArg<'_>>) -> Result<KernelOutput, SpdzError> {
        let req = KernelRequest { op, args, party: self.party(), alpha_share: self.alpha_share };
        Ok(self.backends.execute(&req)?)
    }

    fn shared(&self, op: KernelOp, args: Vec<KernelArg<'_>>) -> Result<ShareBatch, SpdzError> {
        match self.kernel(op, args)? {
            KernelOutput::Shared(s) => Ok(s),
            KernelOutput::Public(_) => unreachable!("shared operands give shared output"),
        }
    }

    /// Opens `shares` under batch id `tag` and logs the result for the MAC
    /// check.
    pub async fn open(&self, tag: u64, shares: ShareSlice<'_>) -> Result<Vec<Fp>, SpdzError> {
        let values = self.session.open_sum(tag, shares.values).await?;
        self.opened_total.fetch_add(values.len() as u64, Ordering::Relaxed);
        let prev = self.log.lock().unwrap().insert(tag, Opened { values: values.clone(), macs: shares.macs.to_vec() });
        if prev.is_some() {
            return Err(SpdzError::DuplicateOpen { tag });
        }
        Ok(values)
    }

    /// `x * y` lane-wise using one triple per lane; `d` and `e` travel in a
    /// single frame.
    pub async fn beaver_mul(&self, tag: u64, x: ShareSlice<'_>, y: ShareSlice<'_>, t: TripleSlice<'_>) -> Result<ShareBatch, SpdzError> {
        let n = x.len();
        if y.len() != n || t.a.len() != n {
            return Err(SpdzError::LaneMismatch { expected: n, got: if y.len() != n { y.len() } else { t.a.len() } });
        }
        let d = self.shared(KernelOp::Sub, vec![KernelArg::Shared(x), KernelArg::Shared(t.a)])?;
        let e = self.shared(KernelOp::Sub, vec![KernelArg::Shared(y), KernelArg::Shared(t.b)])?;
        let mut de = d;
        de.extend_from(e.as_slice());
        let opened = self.open(tag, de.as_slice()).await?;
        let (dv, ev) = opened.split_at(n);
        self.shared(
            KernelOp::BeaverCombine,
            vec![KernelArg::Shared(t.a), KernelArg::Shared(t.b), KernelArg::Shared(t.c), KernelArg::Public(dv), KernelArg::Public(ev)],
        )
    }

    /// Secret-shares an input: the owner broadcasts `x - r` and every
    /// party adds it to its share of the mask `r`.
    pub async fn share_input(&self, tag: u64, mask: &InputMask, clear: Option<&[Fp]>) -> Result<ShareBatch, SpdzError> {
        let owner = mask.owner as usize;
        let words = if owner == self.party() {
            let r = mask.clear.as_ref().ok_or_else(|| SpdzError::MissingInput(mask.name.clone()))?;
            let x = clear.ok_or_else(|| SpdzError::MissingInput(mask.name.clone()))?;
            if x.len() != r.len() {
                return Err(SpdzError::LaneMismatch { expected: r.len(), got: x.len() });
            }
            Some(x.iter().zip(r).map(|(&x, &r)| (x - r).value()).collect())
        } else {
            None
        };
        let got = self.session.broadcast_from(owner, MsgType::OpenShares, tag, words).await?;
        let delta = self.canonical(owner, tag, &got)?;
        if delta.len() != mask.shares.len() {
            return Err(NetError::LaneCountMismatch { peer: owner, expected: mask.shares.len(), got: delta.len() }.into());
        }
        self.shared(KernelOp::Add, vec![KernelArg::Shared(mask.shares.as_slice()), KernelArg::Public(&delta)])
    }

    /// The owner broadcasts a public input in the clear.
    pub async fn share_public(&self, tag: u64, owner: usize, len: usize, clear: Option<&[Fp]>) -> Result<Vec<Fp>, SpdzError> {
        let words = if owner == self.party() {
            let x = clear.ok_or_else(|| SpdzError::MissingInput(format!("public input owned by party {owner}")))?;
            Some(x.iter().map(|v| v.value()).collect())
        } else {
            None
        };
        let got = self.session.broadcast_from(owner, MsgType::OpenShares, tag, words).await?;
        let vals = self.canonical(owner, tag, &got)?;
        if vals.len() != len {
            return Err(NetError::LaneCountMismatch { peer: owner, expected: len, got: vals.len() }.into());
        }
        Ok(vals)
    }

    fn canonical(&self, peer: usize, batch: u64, words: &[u32]) -> Result<Vec<Fp>, SpdzError> {
        words_to_field(words)
            .ok_or_else(|| NetError::MalformedShareMessage { peer, batch, reason: "non-canonical field element".into() }.into())
    }

    /// Checks every logged opening whose tag satisfies `select`, using
    /// `id` for the check's messages. All parties must pass the same `id`
    /// and select the same openings. Returns the number of values covered.
    pub async fn mac_check_where(&self, id: u64, select: impl Fn(u64) -> bool) -> Result<usize, SpdzError> {
        let entries: Vec<Opened> = {
            let mut log = self.log.lock().unwrap();
            let keys: Vec<u64> = log.keys().copied().filter(|&k| select(k)).collect();
            keys.into_iter().map(|k| log.remove(&k).unwrap()).collect()
        };
        let count: usize = entries.iter().map(|o| o.values.len()).sum();
        if count == 0 {
            return Ok(0);
        }
        self.checks.fetch_add(1, Ordering::Relaxed);
        self.run_check(id, &entries).await?;
        Ok(count)
    }

    /// Checks everything still in the log.
    pub async fn mac_check_all(&self) -> Result<usize, SpdzError> {
        self.mac_check_where(FINAL_CHECK, |_| true).await
    }

    async fn run_check(&self, id: u64, entries: &[Opened]) -> Result<(), SpdzError> {
        let (nonce, salt): ([u32; 8], [u32; 4]) = {
            let mut rng = self.rng.lock().unwrap();
            (rng.gen(), rng.gen())
        };
        let nonces = self.session.exchange(MsgType::Nonce, id, nonce.to_vec()).await?;
        let mut h = Sha256::new();
        for n in &nonces {
            n.iter().for_each(|w| h.update(w.to_le_bytes()));
        }
        h.update(id.to_le_bytes());
        let mut coin = ChaCha20Rng::from_seed(h.finalize().into());

        let mut sigma = Fp::ZERO;
        for o in entries {
            for (&x, &m) in o.values.iter().zip(&o.macs) {
                sigma += Fp::random(&mut coin) * (m - self.alpha_share * x);
            }
        }

        let commit = commitment(id, sigma.value(), &salt);
        let commits = self.session.exchange(MsgType::Commit, id, commit.to_vec()).await?;
        let mut reveal = vec![sigma.value()];
        reveal.extend_from_slice(&salt);
        let reveals = self.session.exchange(MsgType::Reveal, id, reveal).await?;

        let mut total = Fp::ZERO;
        for (p, (c, r)) in commits.iter().zip(&reveals).enumerate() {
            if r.len() != 5 || c.len() != 8 {
                return Err(SpdzError::CommitmentMismatch { peer: p });
            }
            let s: [u32; 4] = r[1..5].try_into().unwrap();
            if commitment(id, r[0], &s)[..] != c[..] {
                return Err(SpdzError::CommitmentMismatch { peer: p });
            }
            total += Fp::from_canonical(r[0]).ok_or(SpdzError::CommitmentMismatch { peer: p })?;
        }
        if !total.is_zero() {
            return Err(SpdzError::MacCheckFailed { values: entries.iter().map(|o| o.values.len()).sum() });
        }
        Ok(())
    }
}

fn commitment(id: u64, sigma: u32, salt: &[u32; 4]) -> [u32; 8] {
    let mut h = Sha256::new();
    h.update(b"mac-commit");
    h.update(id.to_le_bytes());
    h.update(sigma.to_le_bytes());
    salt.iter().for_each(|w| h.update(w.to_le_bytes()));
    let d: [u8; 32] = h.finalize().into();
    std::array::from_fn(|i| u32::from_le_bytes(d[4 * i..4 * i + 4].try_into().unwrap()))
}
