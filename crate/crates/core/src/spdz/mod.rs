//! Authenticated additive secret sharing over the prime field.

mod dealer;
mod online;
mod share;
mod store;

pub use dealer::{fake_dealer, fake_dealer_with_key, DealerRequest, MaskRequest};
pub use online::{Online, FINAL_CHECK};
pub use share::{additive_shares, reconstruct, reconstruct_batch, share_value, share_vector, AuthShare, ShareBatch, ShareSlice};
pub use store::{InputMask, MatrixTriple, ScalarTriples, TriplePool, TripleSlice, TripleStore, STORE_MAGIC, STORE_VERSION};

use crate::backend::BackendError;
use crate::net::NetError;

/// Node field value reserved for MAC-check message ids.
pub const CHECK_NODE: u32 = (1 << 20) - 1;

/// Packs a message batch id: 20 bits of node, 24 of visit, 20 of round.
pub fn batch_id(node: u32, visit: u32, round: u32) -> u64 {
    debug_assert!(node < 1 << 20 && visit < 1 << 24 && round < 1 << 20);
    ((node as u64) << 44) | (((visit as u64) & 0xFF_FFFF) << 20) | (round as u64 & 0xF_FFFF)
}

pub fn unpack_batch_id(id: u64) -> (u32, u32, u32) {
    ((id >> 44) as u32, ((id >> 20) & 0xFF_FFFF) as u32, (id & 0xF_FFFF) as u32)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpdzError {
    #[error("MAC check failed over {values} opened values")]
    MacCheckFailed { values: usize },
    #[error("party {peer} revealed a value that does not match its commitment")]
    CommitmentMismatch { peer: usize },
    #[error("triple {index} is already consumed or missing ({available} in store)")]
    TripleExhausted { index: usize, available: usize },
    #[error("matrix triple {index} is {have:?}, needed {want:?}")]
    TripleShapeMismatch { index: usize, want: (u32, u32), have: (u32, u32) },
    #[error("operand has {got} lanes, expected {expected}")]
    LaneMismatch { expected: usize, got: usize },
    #[error("batch id {tag:#x} opened twice")]
    DuplicateOpen { tag: u64 },
    #[error("no input value or mask for {0}")]
    MissingInput(String),
    #[error("triple store version mismatch: {0}")]
    StoreVersionMismatch(String),
    #[error("corrupt triple store: {0}")]
    StoreCorrupt(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}
