//! Wire frames: a 16-byte header followed by `lanes` little-endian u32 words.

use std::io::{self, Read};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MsgType {
    OpenShares = 0,
    Commit = 1,
    Reveal = 2,
    Nonce = 3,
    Control = 4,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<MsgType> {
        Some(match b {
            0 => MsgType::OpenShares,
            1 => MsgType::Commit,
            2 => MsgType::Reveal,
            3 => MsgType::Nonce,
            4 => MsgType::Control,
            _ => return None,
        })
    }
}

pub const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg: MsgType,
    pub batch: u64,
    pub payload: Vec<u32>,
}

impl Frame {
    pub fn new(msg: MsgType, batch: u64, payload: Vec<u32>) -> Frame {
        Frame { msg, batch, payload }
    }

    pub fn lanes(&self) -> u32 {
        self.payload.len() as u32
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.msg as u8);
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&self.lanes().to_le_bytes());
        out.extend_from_slice(&self.batch.to_le_bytes());
        for w in &self.payload {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Decodes one complete frame.
    pub fn decode(bytes: &[u8]) -> Result<Frame, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("frame of {} bytes is shorter than the header", bytes.len()));
        }
        let (msg, lanes, batch) = parse_header(bytes[..HEADER_LEN].try_into().unwrap())?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != lanes as usize * 4 {
            return Err(format!("header announces {lanes} lanes but {} payload bytes follow", body.len()));
        }
        let payload = body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Frame { msg, batch, payload })
    }

    /// Reads one frame from a byte stream; `Ok(None)` on clean EOF.
    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
        let mut header = [0u8; HEADER_LEN];
        match r.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        let lanes = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let mut buf = vec![0u8; HEADER_LEN + lanes * 4];
        buf[..HEADER_LEN].copy_from_slice(&header);
        r.read_exact(&mut buf[HEADER_LEN..])?;
        Ok(Some(buf))
    }
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(MsgType, u32, u64), String> {
    let msg = MsgType::from_byte(h[0]).ok_or_else(|| format!("unknown message type {}", h[0]))?;
    let lanes = u32::from_le_bytes(h[4..8].try_into().unwrap());
    let batch = u64::from_le_bytes(h[8..16].try_into().unwrap());
    Ok((msg, lanes, batch))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let f = Frame::new(MsgType::Commit, 0x0102_0304_0506_0708, vec![1, u32::MAX, 7]);
        let bytes = f.encode();
        assert_eq!(bytes.len(), 16 + 12);
        assert_eq!(bytes[0], 1);
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(Frame::decode(&bytes).unwrap(), f);
        let mut cursor = std::io::Cursor::new(bytes.clone());
        assert_eq!(Frame::read_from(&mut cursor).unwrap().unwrap(), bytes);
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), None);
    }

    #[test]
    fn rejects_short_payload() {
        let mut bytes = Frame::new(MsgType::OpenShares, 1, vec![1, 2]).encode();
        bytes.pop();
        assert!(Frame::decode(&bytes).is_err());
    }
}
