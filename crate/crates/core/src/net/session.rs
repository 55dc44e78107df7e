use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use tokio::sync::oneshot;

use super::frame::{Frame, MsgType};
use super::NetError;
use crate::field::{words_to_field, Fp};

type Key = (usize, MsgType, u64);
type Waiter = oneshot::Sender<Result<Frame, NetError>>;

#[derive(Default)]
struct Inbox {
    ready: HashMap<Key, Frame>,
    waiters: HashMap<Key, Waiter>,
    /// Keys already handed out; a second frame with the same key is a
    /// protocol violation.
    consumed: std::collections::HashSet<Key>,
    failed: HashMap<usize, NetError>,
}

/// Receiving half of a party's links. Transport threads push decoded
/// frames here; protocol code waits on `(peer, type, batch)` keys.
pub struct Mailbox {
    inbox: Mutex<Inbox>,
    received: Vec<AtomicU64>,
}

impl Mailbox {
    pub fn new(n: usize) -> Arc<Mailbox> {
        Arc::new(Mailbox { inbox: Mutex::new(Inbox::default()), received: (0..n).map(|_| AtomicU64::new(0)).collect() })
    }

    /// Hands raw bytes from `peer` to the mailbox.
    pub fn deliver(&self, peer: usize, bytes: &[u8]) {
        self.received[peer].fetch_add(bytes.len() as u64, Ordering::Relaxed);
        let frame = match Frame::decode(bytes) {
            Ok(f) => f,
            Err(reason) => return self.fail(peer, NetError::MalformedFrame { peer, reason }),
        };
        let key = (peer, frame.msg, frame.batch);
        let mut inbox = self.inbox.lock().unwrap();
        if inbox.consumed.contains(&key) || inbox.ready.contains_key(&key) {
            drop(inbox);
            return self.fail(peer, NetError::DuplicateBatch { peer, batch: frame.batch });
        }
        match inbox.waiters.remove(&key) {
            Some(w) => {
                inbox.consumed.insert(key);
                let _ = w.send(Ok(frame));
            }
            None => {
                inbox.ready.insert(key, frame);
            }
        }
    }

    /// Marks a peer as unusable and wakes everything waiting on it.
    pub fn fail(&self, peer: usize, err: NetError) {
        let mut inbox = self.inbox.lock().unwrap();
        inbox.failed.entry(peer).or_insert_with(|| err.clone());
        let keys: Vec<Key> = inbox.waiters.keys().filter(|k| k.0 == peer).copied().collect();
        for k in keys {
            let w = inbox.waiters.remove(&k).unwrap();
            let _ = w.send(Err(err.clone()));
        }
    }

    fn take(&self, key: Key) -> Result<Result<Frame, oneshot::Receiver<Result<Frame, NetError>>>, NetError> {
        let mut inbox = self.inbox.lock().unwrap();
        if let Some(f) = inbox.ready.remove(&key) {
            inbox.consumed.insert(key);
            return Ok(Ok(f));
        }
        if let Some(e) = inbox.failed.get(&key.0) {
            return Err(e.clone());
        }
        let (tx, rx) = oneshot::channel();
        inbox.waiters.insert(key, tx);
        Ok(Err(rx))
    }
}

/// One party's view of the full mesh.
pub struct Session {
    party: usize,
    n: usize,
    out: Vec<Option<Mutex<Sender<Vec<u8>>>>>,
    mailbox: Arc<Mailbox>,
    sent: Vec<AtomicU64>,
    io_timeout: Duration,
    writers: Vec<JoinHandle<()>>,
}

impl Session {
    /// `out[j]` carries encoded frames to party `j` (`None` for self).
    pub fn new(party: usize, out: Vec<Option<Sender<Vec<u8>>>>, mailbox: Arc<Mailbox>, io_timeout: Duration) -> Session {
        let n = out.len();
        Session {
            party,
            n,
            out: out.into_iter().map(|s| s.map(Mutex::new)).collect(),
            mailbox,
            sent: (0..n).map(|_| AtomicU64::new(0)).collect(),
            io_timeout,
            writers: Vec::new(),
        }
    }

    /// Threads draining the outgoing links; joined on drop so queued
    /// frames reach the wire before the process exits.
    pub fn with_writers(mut self, writers: Vec<JoinHandle<()>>) -> Session {
        self.writers = writers;
        self
    }

    pub fn party(&self) -> usize {
        self.party
    }

    pub fn parties(&self) -> usize {
        self.n
    }

    pub fn peers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != self.party)
    }

    pub fn io_timeout(&self) -> Duration {
        self.io_timeout
    }

    /// Open peer links.
    pub fn connection_count(&self) -> usize {
        self.out.iter().filter(|o| o.is_some()).count()
    }

    pub fn bytes_sent(&self) -> u64 {
        self.sent.iter().map(|c| c.load(Ordering::Relaxed)).sum()
    }

    pub fn bytes_received(&self) -> u64 {
        self.mailbox.received.iter().map(|c| c.load(Ordering::Relaxed)).sum()
    }

    pub fn bytes_sent_to(&self, peer: usize) -> u64 {
        self.sent.get(peer).map_or(0, |c| c.load(Ordering::Relaxed))
    }

    pub fn bytes_received_from(&self, peer: usize) -> u64 {
        self.mailbox.received.get(peer).map_or(0, |c| c.load(Ordering::Relaxed))
    }

    pub fn send(&self, peer: usize, frame: &Frame) -> Result<(), NetError> {
        let link = self.out.get(peer).and_then(|o| o.as_ref()).ok_or(NetError::NoSuchPeer { peer })?;
        let bytes = frame.encode();
        self.sent[peer].fetch_add(bytes.len() as u64, Ordering::Relaxed);
        link.lock().unwrap().send(bytes).map_err(|_| NetError::PeerDisconnected { peer })
    }

    pub async fn recv(&self, peer: usize, msg: MsgType, batch: u64) -> Result<Frame, NetError> {
        let rx = match self.mailbox.take((peer, msg, batch))? {
            Ok(f) => return Ok(f),
            Err(rx) => rx,
        };
        match tokio::time::timeout(self.io_timeout, rx).await {
            Ok(Ok(r)) => r,
            Ok(Err(_)) => Err(NetError::PeerDisconnected { peer }),
            Err(_) => Err(NetError::PeerTimeout { peer, batch, waited: self.io_timeout }),
        }
    }

    /// Sends `words` to every peer and collects each peer's words for the
    /// same key. The result is indexed by party, own words included.
    pub async fn exchange(&self, msg: MsgType, batch: u64, words: Vec<u32>) -> Result<Vec<Vec<u32>>, NetError> {
        let frame = Frame::new(msg, batch, words);
        for j in self.peers() {
            self.send(j, &frame)?;
        }
        let mut all = vec![Vec::new(); self.n];
        for j in self.peers() {
            all[j] = self.recv(j, msg, batch).await?.payload;
        }
        all[self.party] = frame.payload;
        Ok(all)
    }

    /// Broadcasts opening shares and returns the lane-wise sum over all
    /// parties.
    pub async fn open_sum(&self, batch: u64, shares: &[Fp]) -> Result<Vec<Fp>, NetError> {
        let words: Vec<u32> = shares.iter().map(|s| s.value()).collect();
        let frame = Frame::new(MsgType::OpenShares, batch, words);
        for j in self.peers() {
            self.send(j, &frame)?;
        }
        let mut sum = shares.to_vec();
        for j in self.peers() {
            let f = self.recv(j, MsgType::OpenShares, batch).await?;
            if f.payload.len() != sum.len() {
                return Err(NetError::LaneCountMismatch { peer: j, expected: sum.len(), got: f.payload.len() });
            }
            let vals = words_to_field(&f.payload)
                .ok_or_else(|| NetError::MalformedShareMessage { peer: j, batch, reason: "non-canonical field element".into() })?;
            for (s, v) in sum.iter_mut().zip(vals) {
                *s += v;
            }
        }
        Ok(sum)
    }

    /// `owner` sends `words` to everyone; every party returns them.
    pub async fn broadcast_from(&self, owner: usize, msg: MsgType, batch: u64, words: Option<Vec<u32>>) -> Result<Vec<u32>, NetError> {
        if owner == self.party {
            let frame = Frame::new(msg, batch, words.ok_or(NetError::NoSuchPeer { peer: owner })?);
            for j in self.peers() {
                self.send(j, &frame)?;
            }
            Ok(frame.payload)
        } else {
            Ok(self.recv(owner, msg, batch).await?.payload)
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.out.clear();
        for w in self.writers.drain(..) {
            let _ = w.join();
        }
    }
}
