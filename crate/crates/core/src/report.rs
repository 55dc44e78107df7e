//! Run reports with the front-end / setup / online stage split.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::Fp;

/// Consecutive stage intervals measured from one clock.
#[derive(Clone, Debug)]
pub struct StageClock {
    start: Instant,
    last: Instant,
    laps: Vec<Duration>,
}

impl Default for StageClock {
    fn default() -> Self {
        Self::new()
    }
}

impl StageClock {
    pub fn new() -> StageClock {
        let now = Instant::now();
        StageClock { start: now, last: now, laps: Vec::new() }
    }

    /// Closes the current stage and returns its length.
    pub fn lap(&mut self) -> Duration {
        let now = Instant::now();
        let d = now - self.last;
        self.last = now;
        self.laps.push(d);
        d
    }

    pub fn laps(&self) -> &[Duration] {
        &self.laps
    }

    /// From construction to the end of the last stage.
    pub fn total(&self) -> Duration {
        self.last - self.start
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerBytes {
    pub peer: usize,
    pub sent: u64,
    pub received: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub party: usize,
    pub parties: usize,
    pub front_end_ms: f64,
    pub setup_ms: f64,
    pub online_ms: f64,
    pub total_ms: f64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub per_peer: Vec<PeerBytes>,
    pub scalar_triples: usize,
    pub matrix_triples: usize,
    pub opened_values: u64,
    pub mac_checks: u64,
    pub output_len: usize,
    pub output_digest: String,
    pub workers: usize,
    pub slice: u64,
}

impl RunReport {
    /// Fills the stage fields from a clock with exactly three laps.
    pub fn set_stages(&mut self, clock: &StageClock) {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let l = clock.laps();
        assert_eq!(l.len(), 3, "front end, setup and online");
        self.front_end_ms = ms(l[0]);
        self.setup_ms = ms(l[1]);
        self.online_ms = ms(l[2]);
        self.total_ms = ms(clock.total());
    }

    pub fn csv_header() -> &'static str {
        "party,parties,workers,slice,front_end_ms,setup_ms,online_ms,total_ms,bytes_sent,bytes_received,scalar_triples,matrix_triples,opened_values,mac_checks,output_digest"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{},{},{},{},{},{},{}",
            self.party,
            self.parties,
            self.workers,
            self.slice,
            self.front_end_ms,
            self.setup_ms,
            self.online_ms,
            self.total_ms,
            self.bytes_sent,
            self.bytes_received,
            self.scalar_triples,
            self.matrix_triples,
            self.opened_values,
            self.mac_checks,
            self.output_digest
        )
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "party {}/{}  workers {}  slice {}\n\
             front end {:>10.3} ms\n\
             setup     {:>10.3} ms\n\
             online    {:>10.3} ms\n\
             total     {:>10.3} ms\n\
             triples: {} scalar, {} matrix; opened {} values, {} MAC checks\n\
             output: {} values, digest {}\n",
            self.party,
            self.parties,
            self.workers,
            self.slice,
            self.front_end_ms,
            self.setup_ms,
            self.online_ms,
            self.total_ms,
            self.scalar_triples,
            self.matrix_triples,
            self.opened_values,
            self.mac_checks,
            self.output_len,
            self.output_digest
        );
        for p in &self.per_peer {
            s.push_str(&format!("peer {}: sent {} B, received {} B\n", p.peer, p.sent, p.received));
        }
        s
    }
}

/// SHA-256 over the little-endian words of `out`, hex encoded.
pub fn output_digest(out: &[Fp]) -> String {
    let mut h = Sha256::new();
    for v in out {
        h.update(v.value().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
