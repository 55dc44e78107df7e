//! Runtime value handles. Both variants are cheap to clone: the data sits
//! behind an `Arc` and a handle is a window into it, so loads are views.

use std::ops::Range;
use std::sync::Arc;

use crate::backend::{KernelArg, KernelOutput};
use crate::field::Fp;
use crate::spdz::{ShareBatch, ShareSlice};

#[derive(Clone, Debug)]
pub enum Value {
    Public(Arc<Vec<Fp>>, Range<usize>),
    Shared(Arc<ShareBatch>, Range<usize>),
}

impl Value {
    pub fn public(v: Vec<Fp>) -> Value {
        let n = v.len();
        Value::Public(Arc::new(v), 0..n)
    }

    pub fn shared(b: ShareBatch) -> Value {
        let n = b.len();
        Value::Shared(Arc::new(b), 0..n)
    }

    pub fn from_output(o: KernelOutput) -> Value {
        match o {
            KernelOutput::Public(v) => Value::public(v),
            KernelOutput::Shared(s) => Value::shared(s),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Value::Public(_, r) | Value::Shared(_, r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_private(&self) -> bool {
        matches!(self, Value::Shared(..))
    }

    pub fn public_values(&self) -> Option<&[Fp]> {
        match self {
            Value::Public(v, r) => Some(&v[r.clone()]),
            Value::Shared(..) => None,
        }
    }

    pub fn shares(&self) -> Option<ShareSlice<'_>> {
        match self {
            Value::Shared(b, r) => Some(b.slice(r.clone())),
            Value::Public(..) => None,
        }
    }

    pub fn arg(&self) -> KernelArg<'_> {
        match self {
            Value::Public(v, r) => KernelArg::Public(&v[r.clone()]),
            Value::Shared(b, r) => KernelArg::Shared(b.slice(r.clone())),
        }
    }

    /// Sub-window `range` (relative to this view); `None` if out of bounds.
    pub fn view(&self, range: Range<usize>) -> Option<Value> {
        if range.start > range.end || range.end > self.len() {
            return None;
        }
        Some(match self {
            Value::Public(v, r) => Value::Public(v.clone(), r.start + range.start..r.start + range.end),
            Value::Shared(b, r) => Value::Shared(b.clone(), r.start + range.start..r.start + range.end),
        })
    }
}
