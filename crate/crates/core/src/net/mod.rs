//! Party-to-party messaging: framing, the per-party session, a TCP mesh
//! and an in-process transport with fault injection.

mod frame;
mod session;
mod sim;
mod tcp;

use std::time::Duration;

pub use frame::{Frame, MsgType, HEADER_LEN};
pub use session::{Mailbox, Session};
pub use sim::{simulated_mesh, Fault, FaultPlan};
pub use tcp::{connect_mesh, parse_party_config, MeshConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("timed out after {waited:?} waiting for party {peer} (batch {batch:#x})")]
    PeerTimeout { peer: usize, batch: u64, waited: Duration },
    #[error("party {peer} disconnected")]
    PeerDisconnected { peer: usize },
    #[error("no link to party {peer}")]
    NoSuchPeer { peer: usize },
    #[error("party {peer} sent {got} lanes, expected {expected}")]
    LaneCountMismatch { peer: usize, expected: usize, got: usize },
    #[error("malformed share message from party {peer} (batch {batch:#x}): {reason}")]
    MalformedShareMessage { peer: usize, batch: u64, reason: String },
    #[error("malformed frame from party {peer}: {reason}")]
    MalformedFrame { peer: usize, reason: String },
    #[error("party {peer} reused batch id {batch:#x}")]
    DuplicateBatch { peer: usize, batch: u64 },
    #[error("could not reach party {peer} at {endpoint} before the deadline")]
    ConnectTimeout { peer: usize, endpoint: String },
    #[error("party index {index} claimed twice or out of range")]
    IndexCollision { index: usize },
    #[error("bad party configuration: {0}")]
    BadConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NetError {
    fn from(e: std::io::Error) -> Self {
        NetError::Io(e.to_string())
    }
}
