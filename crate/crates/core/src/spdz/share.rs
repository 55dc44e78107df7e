use rand::Rng;

use crate::field::Fp;

/// One party's additive share of a value and of its MAC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AuthShare {
    pub value: Fp,
    pub mac: Fp,
}

impl AuthShare {
    pub fn new(value: Fp, mac: Fp) -> AuthShare {
        AuthShare { value, mac }
    }

    /// Adds public `k`: only party 0 shifts its value share, every party
    /// shifts its MAC share by `alpha_i * k`.
    pub fn add_public(self, k: Fp, party: usize, alpha_i: Fp) -> AuthShare {
        let value = if party == 0 { self.value + k } else { self.value };
        AuthShare { value, mac: self.mac + alpha_i * k }
    }

    pub fn scale(self, k: Fp) -> AuthShare {
        AuthShare { value: self.value * k, mac: self.mac * k }
    }
}

impl std::ops::Add for AuthShare {
    type Output = AuthShare;
    fn add(self, o: AuthShare) -> AuthShare {
        AuthShare { value: self.value + o.value, mac: self.mac + o.mac }
    }
}

impl std::ops::Sub for AuthShare {
    type Output = AuthShare;
    fn sub(self, o: AuthShare) -> AuthShare {
        AuthShare { value: self.value - o.value, mac: self.mac - o.mac }
    }
}

/// Structure-of-arrays batch of authenticated shares.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShareBatch {
    pub values: Vec<Fp>,
    pub macs: Vec<Fp>,
}

/// Borrowed window into a [`ShareBatch`].
#[derive(Clone, Copy, Debug)]
pub struct ShareSlice<'a> {
    pub values: &'a [Fp],
    pub macs: &'a [Fp],
}

impl<'a> ShareSlice<'a> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> AuthShare {
        AuthShare::new(self.values[i], self.macs[i])
    }

    pub fn sub(&self, range: std::ops::Range<usize>) -> ShareSlice<'a> {
        ShareSlice { values: &self.values[range.clone()], macs: &self.macs[range] }
    }

    pub fn to_batch(&self) -> ShareBatch {
        ShareBatch { values: self.values.to_vec(), macs: self.macs.to_vec() }
    }
}

impl ShareBatch {
    pub fn zeros(n: usize) -> ShareBatch {
        ShareBatch { values: vec![Fp::ZERO; n], macs: vec![Fp::ZERO; n] }
    }

    pub fn with_capacity(n: usize) -> ShareBatch {
        ShareBatch { values: Vec::with_capacity(n), macs: Vec::with_capacity(n) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> AuthShare {
        AuthShare::new(self.values[i], self.macs[i])
    }

    pub fn push(&mut self, s: AuthShare) {
        self.values.push(s.value);
        self.macs.push(s.mac);
    }

    pub fn extend_from(&mut self, s: ShareSlice<'_>) {
        self.values.extend_from_slice(s.values);
        self.macs.extend_from_slice(s.macs);
    }

    pub fn as_slice(&self) -> ShareSlice<'_> {
        ShareSlice { values: &self.values, macs: &self.macs }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> ShareSlice<'_> {
        self.as_slice().sub(range)
    }
}

impl FromIterator<AuthShare> for ShareBatch {
    fn from_iter<I: IntoIterator<Item = AuthShare>>(iter: I) -> Self {
        let mut b = ShareBatch::default();
        for s in iter {
            b.push(s);
        }
        b
    }
}

/// Random additive sharing of `x` among `n` parties.
pub fn additive_shares<R: Rng + ?Sized>(x: Fp, n: usize, rng: &mut R) -> Vec<Fp> {
    let mut out: Vec<Fp> = (1..n).map(|_| Fp::random(rng)).collect();
    let rest: Fp = out.iter().copied().sum();
    out.insert(0, x - rest);
    out
}

/// Authenticated sharing of `x` under the global key `alpha`.
pub fn share_value<R: Rng + ?Sized>(x: Fp, alpha: Fp, n: usize, rng: &mut R) -> Vec<AuthShare> {
    let vs = additive_shares(x, n, rng);
    let ms = additive_shares(alpha * x, n, rng);
    vs.into_iter().zip(ms).map(|(v, m)| AuthShare::new(v, m)).collect()
}

/// Authenticated sharing of a vector; one batch per party.
pub fn share_vector<R: Rng + ?Sized>(xs: &[Fp], alpha: Fp, n: usize, rng: &mut R) -> Vec<ShareBatch> {
    let mut out = vec![ShareBatch::with_capacity(xs.len()); n];
    for &x in xs {
        for (p, s) in share_value(x, alpha, n, rng).into_iter().enumerate() {
            out[p].push(s);
        }
    }
    out
}

/// Sums shares; the result's `mac` equals `alpha * value` iff the shares
/// are consistent.
pub fn reconstruct(shares: &[AuthShare]) -> AuthShare {
    shares.iter().fold(AuthShare::default(), |a, &s| a + s)
}

/// Lane-wise reconstruction of per-party batches.
pub fn reconstruct_batch(batches: &[ShareBatch]) -> (Vec<Fp>, Vec<Fp>) {
    let len = batches.first().map_or(0, |b| b.len());
    let mut values = vec![Fp::ZERO; len];
    let mut macs = vec![Fp::ZERO; len];
    for b in batches {
        for i in 0..len {
            values[i] += b.values[i];
            macs[i] += b.macs[i];
        }
    }
    (values, macs)
}
