//! Full TCP mesh. Party `i` accepts connections from every `j > i` and
//! dials every `j < i`; the dialer announces itself with a hello frame.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::frame::{Frame, MsgType};
use super::session::{Mailbox, Session};
use super::NetError;

#[derive(Clone, Debug)]
pub struct MeshConfig {
    pub party: usize,
    /// `host:port` per party index.
    pub endpoints: Vec<String>,
    pub connect_timeout: Duration,
    pub io_timeout: Duration,
}

/// Parses `index host:port` lines (blank lines and `#` comments allowed).
pub fn parse_party_config(text: &str) -> Result<Vec<String>, NetError> {
    let mut by_index = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(idx), Some(addr), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(NetError::BadConfig(format!("line {}: expected `index host:port`", no + 1)));
        };
        let idx: usize = idx.parse().map_err(|_| NetError::BadConfig(format!("line {}: bad index {idx:?}", no + 1)))?;
        if by_index.insert(idx, addr.to_string()).is_some() {
            return Err(NetError::IndexCollision { index: idx });
        }
    }
    if by_index.is_empty() {
        return Err(NetError::BadConfig("no parties listed".into()));
    }
    if let Some((pos, (&idx, _))) = by_index.iter().enumerate().find(|(pos, (idx, _))| *pos != **idx) {
        return Err(NetError::BadConfig(format!("party indices must be 0..n, found {idx} at position {pos}")));
    }
    Ok(by_index.into_values().collect())
}

fn dial(addr: &str, peer: usize, deadline: Instant) -> Result<TcpStream, NetError> {
    let timeout = || NetError::ConnectTimeout { peer, endpoint: addr.to_string() };
    loop {
        let now = Instant::now();
        if now >= deadline {
            return Err(timeout());
        }
        let addrs: Vec<_> = addr.to_socket_addrs().map_err(|e| NetError::BadConfig(format!("{addr}: {e}")))?.collect();
        for a in &addrs {
            if let Ok(s) = TcpStream::connect_timeout(a, deadline - now) {
                return Ok(s);
            }
        }
        thread::sleep(Duration::from_millis(20));
    }
}

pub fn connect_mesh(cfg: &MeshConfig) -> Result<Session, NetError> {
    let n = cfg.endpoints.len();
    let me = cfg.party;
    if me >= n {
        return Err(NetError::IndexCollision { index: me });
    }
    let deadline = Instant::now() + cfg.connect_timeout;
    let listener = if me + 1 < n { Some(TcpListener::bind(&cfg.endpoints[me])?) } else { None };

    let mut streams: Vec<Option<TcpStream>> = (0..n).map(|_| None).collect();
    for (j, slot) in streams.iter_mut().enumerate().take(me) {
        let mut s = dial(&cfg.endpoints[j], j, deadline)?;
        s.write_all(&Frame::new(MsgType::Control, me as u64, Vec::new()).encode())?;
        *slot = Some(s);
    }
    if let Some(listener) = listener {
        listener.set_nonblocking(true)?;
        while streams[me + 1..].iter().any(|s| s.is_none()) {
            if Instant::now() >= deadline {
                let peer = (me + 1..n).find(|&j| streams[j].is_none()).unwrap();
                return Err(NetError::ConnectTimeout { peer, endpoint: cfg.endpoints[peer].clone() });
            }
            let mut s = match listener.accept() {
                Ok((s, _)) => s,
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(5));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            s.set_nonblocking(false)?;
            s.set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1))))?;
            let hello = Frame::read_from(&mut s)?.ok_or_else(|| NetError::Io("peer closed before hello".into()))?;
            let hello = Frame::decode(&hello).map_err(NetError::Io)?;
            let k = hello.batch as usize;
            if hello.msg != MsgType::Control || k <= me || k >= n || streams[k].is_some() {
                return Err(NetError::IndexCollision { index: k });
            }
            s.set_read_timeout(None)?;
            streams[k] = Some(s);
        }
    }

    let mailbox = Mailbox::new(n);
    let mut out = Vec::with_capacity(n);
    let mut writers = Vec::new();
    for (j, s) in streams.into_iter().enumerate() {
        let Some(s) = s else {
            out.push(None);
            continue;
        };
        s.set_nodelay(true)?;
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        let mut w = s.try_clone()?;
        writers.push(thread::Builder::new().name(format!("tx-{me}-{j}")).spawn(move || {
            while let Ok(bytes) = rx.recv() {
                if w.write_all(&bytes).is_err() {
                    break;
                }
            }
            let _ = w.shutdown(Shutdown::Write);
        })?);
        let mut r = s;
        let mb: Arc<Mailbox> = mailbox.clone();
        thread::Builder::new().name(format!("rx-{me}-{j}")).spawn(move || {
            while let Ok(Some(bytes)) = Frame::read_from(&mut r) {
                mb.deliver(j, &bytes);
            }
            mb.fail(j, NetError::PeerDisconnected { peer: j });
        })?;
        out.push(Some(tx));
    }
    Ok(Session::new(me, out, mailbox, cfg.io_timeout).with_writers(writers))
}
