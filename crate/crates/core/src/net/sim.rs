//! In-process transport. Every directed link is a thread that moves
//! encoded frames from the sender's channel to the receiver's mailbox,
//! applying any faults configured for that link.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use super::frame::{MsgType, HEADER_LEN};
use super::session::{Mailbox, Session};
use super::NetError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Flip `bit` of payload word `lane` in the `nth` (0-based) frame of
    /// type `msg` sent from `from` to `to`.
    FlipBit { from: usize, to: usize, msg: MsgType, nth: usize, lane: usize, bit: u8 },
    /// Hold every frame on the link for `delay`.
    Delay { from: usize, to: usize, delay: Duration },
    /// Deliver frames in reversed groups of `window`.
    Reorder { from: usize, to: usize, window: usize },
    /// Drop everything on the link.
    Sever { from: usize, to: usize },
}

impl Fault {
    fn link(&self) -> (usize, usize) {
        match *self {
            Fault::FlipBit { from, to, .. }
            | Fault::Delay { from, to, .. }
            | Fault::Reorder { from, to, .. }
            | Fault::Sever { from, to } => (from, to),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FaultPlan {
    pub faults: Vec<Fault>,
}

impl FaultPlan {
    pub fn none() -> FaultPlan {
        FaultPlan::default()
    }

    pub fn with(mut self, f: Fault) -> FaultPlan {
        self.faults.push(f);
        self
    }
}

/// Builds `n` fully connected sessions over in-process links.
pub fn simulated_mesh(n: usize, plan: &FaultPlan, io_timeout: Duration) -> Vec<Arc<Session>> {
    let mailboxes: Vec<Arc<Mailbox>> = (0..n).map(|_| Mailbox::new(n)).collect();
    let mut sessions = Vec::with_capacity(n);
    for i in 0..n {
        let mut out = Vec::with_capacity(n);
        for (j, peer_box) in mailboxes.iter().enumerate() {
            if i == j {
                out.push(None);
                continue;
            }
            let (tx, rx) = mpsc::channel::<Vec<u8>>();
            let faults: Vec<Fault> = plan.faults.iter().filter(|f| f.link() == (i, j)).cloned().collect();
            let dst = peer_box.clone();
            thread::Builder::new()
                .name(format!("link-{i}-{j}"))
                .spawn(move || run_link(i, rx, dst, faults))
                .expect("spawn link thread");
            out.push(Some(tx));
        }
        sessions.push(Arc::new(Session::new(i, out, mailboxes[i].clone(), io_timeout)));
    }
    sessions
}

fn run_link(from: usize, rx: Receiver<Vec<u8>>, dst: Arc<Mailbox>, faults: Vec<Fault>) {
    let severed = faults.iter().any(|f| matches!(f, Fault::Sever { .. }));
    let delay = faults.iter().find_map(|f| match f {
        Fault::Delay { delay, .. } => Some(*delay),
        _ => None,
    });
    let window = faults
        .iter()
        .find_map(|f| match f {
            Fault::Reorder { window, .. } => Some(*window),
            _ => None,
        })
        .unwrap_or(1)
        .max(1);
    let mut counts = [0usize; 5];
    let mut held: Vec<Vec<u8>> = Vec::new();
    let flush = |held: &mut Vec<Vec<u8>>| {
        while let Some(b) = held.pop() {
            dst.deliver(from, &b);
        }
    };
    loop {
        let next = if held.is_empty() {
            rx.recv().map_err(|_| RecvTimeoutError::Disconnected)
        } else {
            rx.recv_timeout(Duration::from_millis(5))
        };
        let mut bytes = match next {
            Ok(b) => b,
            Err(RecvTimeoutError::Timeout) => {
                flush(&mut held);
                continue;
            }
            Err(RecvTimeoutError::Disconnected) => break,
        };
        if severed {
            continue;
        }
        if bytes.len() >= HEADER_LEN {
            let ty = bytes[0] as usize;
            if let Some(c) = counts.get_mut(ty) {
                for f in &faults {
                    if let Fault::FlipBit { msg, nth, lane, bit, .. } = *f {
                        let lanes = (bytes.len() - HEADER_LEN) / 4;
                        if msg as usize == ty && nth == *c && lanes > 0 {
                            let at = HEADER_LEN + 4 * (lane % lanes) + (bit as usize / 8);
                            bytes[at] ^= 1 << (bit % 8);
                        }
                    }
                }
                *c += 1;
            }
        }
        if let Some(d) = delay {
            thread::sleep(d);
        }
        held.push(bytes);
        if held.len() >= window {
            flush(&mut held);
        }
    }
    flush(&mut held);
    dst.fail(from, NetError::PeerDisconnected { peer: from });
}
