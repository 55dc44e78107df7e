//! Arithmetic in the prime field F_p with p = 2^32 - 5.
//!
//! Elements are stored as canonical `u32` values in `[0, p)`. Products use a
//! 64-bit intermediate and a two-step folding reduction that exploits
//! `2^32 ≡ 5 (mod p)`.

use std::fmt;
use std::iter::{Product, Sum};
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// The field modulus, 4294967291.
pub const P: u32 = 4_294_967_291;
const P64: u64 = P as u64;

/// An element of F_p.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fp(u32);

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);

    /// Builds an element from any `u32`, reducing it into range.
    #[inline]
    pub const fn new(v: u32) -> Fp {
        if v >= P {
            Fp(v - P)
        } else {
            Fp(v)
        }
    }

    /// Accepts `v` only if it is already canonical.
    #[inline]
    pub fn from_canonical(v: u32) -> Option<Fp> {
        (v < P).then_some(Fp(v))
    }

    #[inline]
    pub fn from_u64(v: u64) -> Fp {
        Fp(reduce_u64(v))
    }

    /// Maps a signed integer onto its residue class.
    pub fn from_i64(v: i64) -> Fp {
        let r = v.rem_euclid(P64 as i64);
        Fp(r as u32)
    }

    #[inline]
    pub const fn value(self) -> u32 {
        self.0
    }

    /// Centered representative in `(-p/2, p/2]`, used for signed comparisons
    /// of public values.
    pub fn signed(self) -> i64 {
        let v = self.0 as i64;
        if v > (P64 / 2) as i64 {
            v - P64 as i64
        } else {
            v
        }
    }

    pub fn pow(self, mut exp: u64) -> Fp {
        let mut base = self;
        let mut acc = Fp::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(self) -> Option<Fp> {
        (self.0 != 0).then(|| self.pow(P64 - 2))
    }

    /// Uniform sample from F_p by rejection.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Fp {
        loop {
            let v: u32 = rng.gen();
            if v < P {
                return Fp(v);
            }
        }
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

/// Reduces a 64-bit value modulo p.
#[inline]
pub fn reduce_u64(x: u64) -> u32 {
    // x = hi * 2^32 + lo ≡ 5 * hi + lo
    let folded = (x >> 32) * 5 + (x & 0xffff_ffff);
    // folded < 6 * 2^32, so one more fold leaves at most 2^32 + 25
    let folded = (folded >> 32) * 5 + (folded & 0xffff_ffff);
    let mut r = folded;
    if r >= P64 {
        r -= P64;
    }
    if r >= P64 {
        r -= P64;
    }
    r as u32
}

#[inline]
pub fn add_raw(a: u32, b: u32) -> u32 {
    let s = a as u64 + b as u64;
    if s >= P64 {
        (s - P64) as u32
    } else {
        s as u32
    }
}

#[inline]
pub fn sub_raw(a: u32, b: u32) -> u32 {
    if a >= b {
        a - b
    } else {
        (a as u64 + P64 - b as u64) as u32
    }
}

#[inline]
pub fn mul_raw(a: u32, b: u32) -> u32 {
    reduce_u64(a as u64 * b as u64)
}

impl Add for Fp {
    type Output = Fp;
    #[inline]
    fn add(self, rhs: Fp) -> Fp {
        Fp(add_raw(self.0, rhs.0))
    }
}

impl Sub for Fp {
    type Output = Fp;
    #[inline]
    fn sub(self, rhs: Fp) -> Fp {
        Fp(sub_raw(self.0, rhs.0))
    }
}

impl Mul for Fp {
    type Output = Fp;
    #[inline]
    fn mul(self, rhs: Fp) -> Fp {
        Fp(mul_raw(self.0, rhs.0))
    }
}

impl Neg for Fp {
    type Output = Fp;
    #[inline]
    fn neg(self) -> Fp {
        Fp(sub_raw(0, self.0))
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, rhs: Fp) {
        *self = *self - rhs;
    }
}

impl MulAssign for Fp {
    fn mul_assign(&mut self, rhs: Fp) {
        *self = *self * rhs;
    }
}

impl Sum for Fp {
    fn sum<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a Fp> for Fp {
    fn sum<I: Iterator<Item = &'a Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ZERO, |a, b| a + *b)
    }
}

impl Product for Fp {
    fn product<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ONE, |a, b| a * b)
    }
}

impl From<u32> for Fp {
    fn from(v: u32) -> Fp {
        Fp::new(v)
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Converts a slice of raw words into field elements, rejecting
/// non-canonical values.
pub fn words_to_field(words: &[u32]) -> Option<Vec<Fp>> {
    words.iter().map(|&w| Fp::from_canonical(w)).collect()
}

pub fn field_to_words(values: &[Fp]) -> Vec<u32> {
    values.iter().map(|v| v.0).collect()
}
