//! Versioned little-endian circuit file.
//!
//! Layout: `"MPCG"`, format version (u32), field prime (u64), node count
//! (u32), then the node table, label table, loop table, input descriptors
//! and finally the root and entry ids.

use std::collections::BTreeMap;

use super::{CircuitGraph, InputDesc, LoopInfo, Node, NodeId, NodeKind};
use crate::field::{Fp, P};
use crate::ir::{Predicate, Privacy};

pub const MAGIC: &[u8; 4] = b"MPCG";
pub const FORMAT_VERSION: u32 = 1;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CircuitFileError {
    #[error("not a circuit file of version {FORMAT_VERSION}: {0}")]
    VersionMismatch(String),
    #[error("corrupt circuit file: {0}")]
    CorruptPayload(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn ids(&mut self, ids: &[NodeId]) {
        self.u32(ids.len() as u32);
        for &i in ids {
            self.u32(i);
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn opt(&mut self, v: Option<NodeId>) {
        self.u32(v.unwrap_or(NONE));
    }
}

fn pred_code(p: Predicate) -> u8 {
    match p {
        Predicate::Eq => 0,
        Predicate::Ne => 1,
        Predicate::Slt => 2,
        Predicate::Sgt => 3,
        Predicate::Sle => 4,
        Predicate::Sge => 5,
    }
}

const PREDS: [Predicate; 6] = [Predicate::Eq, Predicate::Ne, Predicate::Slt, Predicate::Sgt, Predicate::Sle, Predicate::Sge];

fn kind_tag(k: &NodeKind) -> u8 {
    match k {
        NodeKind::Input { .. } => 0,
        NodeKind::Const { .. } => 1,
        NodeKind::Adder => 2,
        NodeKind::Multiplier => 3,
        NodeKind::Subtract => 4,
        NodeKind::AddBatch => 5,
        NodeKind::MultBatch => 6,
        NodeKind::SubBatch => 7,
        NodeKind::ReduceAdd => 8,
        NodeKind::ReduceMul => 9,
        NodeKind::Load => 10,
        NodeKind::LinearLayer { .. } => 11,
        NodeKind::Compare { .. } => 12,
        NodeKind::Phi { .. } => 13,
        NodeKind::Branch { .. } => 14,
        NodeKind::BlockLabel { .. } => 15,
        NodeKind::Root => 16,
    }
}

pub fn serialize_circuit(g: &CircuitGraph) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(P as u64);
    w.u32(g.nodes.len() as u32);
    for n in &g.nodes {
        w.u32(n.id);
        w.u8(kind_tag(&n.kind));
        w.u32(n.lanes);
        w.opt(n.block);
        w.u8(n.privacy.is_private() as u8);
        w.opt(n.next);
        w.ids(&n.operands);
        match &n.kind {
            NodeKind::Input { param } => w.u32(*param),
            NodeKind::Const { values } => {
                w.u32(values.len() as u32);
                for v in values {
                    w.u32(v.value());
                }
            }
            NodeKind::LinearLayer { din, dout } => {
                w.u32(*din);
                w.u32(*dout);
            }
            NodeKind::Compare { pred } => w.u8(pred_code(*pred)),
            NodeKind::Phi { incoming } => {
                w.u32(incoming.len() as u32);
                for &(l, v) in incoming {
                    w.u32(l);
                    w.u32(v);
                }
            }
            NodeKind::Branch { targets } => w.ids(targets),
            NodeKind::BlockLabel { name } => w.str(name),
            _ => {}
        }
    }
    w.ids(&g.labels);
    w.u32(g.loops.len() as u32);
    for l in g.loops.values() {
        w.u32(l.header);
        w.ids(&l.members);
        w.ids(&l.exits);
    }
    w.u32(g.inputs.len() as u32);
    for i in &g.inputs {
        w.str(&i.name);
        w.u8(i.privacy.is_private() as u8);
        w.u64(i.len);
        w.u32(i.node);
    }
    w.u32(g.root);
    w.u32(g.entry);
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

type RResult<T> = Result<T, CircuitFileError>;

fn corrupt(msg: impl Into<String>) -> CircuitFileError {
    CircuitFileError::CorruptPayload(msg.into())
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> RResult<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> RResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> RResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> RResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&mut self, elem_size: usize) -> RResult<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem_size) > self.buf.len() - self.pos {
            return Err(corrupt("length prefix exceeds file size"));
        }
        Ok(n)
    }
    fn ids(&mut self) -> RResult<Vec<NodeId>> {
        let n = self.count(4)?;
        (0..n).map(|_| self.u32()).collect()
    }
    fn str(&mut self) -> RResult<String> {
        let n = self.count(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("name is not UTF-8"))
    }
    fn opt(&mut self) -> RResult<Option<NodeId>> {
        let v = self.u32()?;
        Ok((v != NONE).then_some(v))
    }
    fn privacy(&mut self) -> RResult<Privacy> {
        match self.u8()? {
            0 => Ok(Privacy::Public),
            1 => Ok(Privacy::Private),
            b => Err(corrupt(format!("bad privacy byte {b}"))),
        }
    }
}

pub fn deserialize_circuit(bytes: &[u8]) -> Result<CircuitGraph, CircuitFileError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| CircuitFileError::VersionMismatch("file too short".into()))?;
    if magic != MAGIC {
        return Err(CircuitFileError::VersionMismatch(format!("bad magic {magic:02x?}")));
    }
    let version = r.u32().map_err(|_| CircuitFileError::VersionMismatch("file too short".into()))?;
    if version != FORMAT_VERSION {
        return Err(CircuitFileError::VersionMismatch(format!("found version {version}")));
    }
    let p = r.u64()?;
    if p != P as u64 {
        return Err(CircuitFileError::VersionMismatch(format!("circuit is for prime {p}")));
    }
    let count = r.count(19)?;
    let mut nodes = Vec::with_capacity(count);
    for idx in 0..count {
        let id = r.u32()?;
        if id as usize != idx {
            return Err(corrupt(format!("node {idx} stored with id {id}")));
        }
        let tag = r.u8()?;
        let lanes = r.u32()?;
        let block = r.opt()?;
        let privacy = r.privacy()?;
        let next = r.opt()?;
        let operands = r.ids()?;
        let kind = match tag {
            0 => NodeKind::Input { param: r.u32()? },
            1 => {
                let n = r.count(4)?;
                let mut values = Vec::with_capacity(n);
                for _ in 0..n {
                    values.push(Fp::from_canonical(r.u32()?).ok_or_else(|| corrupt("non-canonical constant"))?);
                }
                NodeKind::Const { values }
            }
            2 => NodeKind::Adder,
            3 => NodeKind::Multiplier,
            4 => NodeKind::Subtract,
            5 => NodeKind::AddBatch,
            6 => NodeKind::MultBatch,
            7 => NodeKind::SubBatch,
            8 => NodeKind::ReduceAdd,
            9 => NodeKind::ReduceMul,
            10 => NodeKind::Load,
            11 => NodeKind::LinearLayer { din: r.u32()?, dout: r.u32()? },
            12 => {
                let code = r.u8()? as usize;
                NodeKind::Compare { pred: *PREDS.get(code).ok_or_else(|| corrupt("bad predicate"))? }
            }
            13 => {
                let n = r.count(8)?;
                let mut incoming = Vec::with_capacity(n);
                for _ in 0..n {
                    incoming.push((r.u32()?, r.u32()?));
                }
                NodeKind::Phi { incoming }
            }
            14 => NodeKind::Branch { targets: r.ids()? },
            15 => NodeKind::BlockLabel { name: r.str()? },
            16 => NodeKind::Root,
            t => return Err(corrupt(format!("unknown node kind tag {t}"))),
        };
        nodes.push(Node { id, kind, lanes, operands, block, privacy, next });
    }
    let labels = r.ids()?;
    let nloops = r.count(12)?;
    let mut loops = BTreeMap::new();
    for _ in 0..nloops {
        let header = r.u32()?;
        let members = r.ids()?;
        let exits = r.ids()?;
        loops.insert(header, LoopInfo { header, members, exits });
    }
    let ninputs = r.count(17)?;
    let mut inputs = Vec::with_capacity(ninputs);
    for _ in 0..ninputs {
        let name = r.str()?;
        let privacy = r.privacy()?;
        let len = r.u64()?;
        let node = r.u32()?;
        inputs.push(InputDesc { name, privacy, len, node });
    }
    let root = r.u32()?;
    let entry = r.u32()?;
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    let mut g = CircuitGraph { nodes, root, entry, labels, inputs, loops, const_pool: BTreeMap::new() };
    check_references(&g)?;
    g.rebuild_const_pool();
    Ok(g)
}

fn check_references(g: &CircuitGraph) -> RResult<()> {
    let n = g.nodes.len() as u32;
    let ok = |id: NodeId| id < n;
    let is_label = |id: NodeId| ok(id) && matches!(g.nodes[id as usize].kind, NodeKind::BlockLabel { .. });
    for node in &g.nodes {
        let mut refs: Vec<NodeId> = node.operands.clone();
        refs.extend(node.block);
        refs.extend(node.next);
        match &node.kind {
            NodeKind::Phi { incoming } => refs.extend(incoming.iter().flat_map(|&(l, v)| [l, v])),
            NodeKind::Branch { targets } if !targets.iter().all(|&t| is_label(t)) => {
                return Err(corrupt(format!("branch {} targets a non-label", node.id)));
            }
            _ => {}
        }
        if let Some(bad) = refs.into_iter().find(|&r| !ok(r)) {
            return Err(corrupt(format!("node {} references missing node {bad}", node.id)));
        }
    }
    let loop_ids = g.loops.values().flat_map(|l| l.members.iter().chain(&l.exits).chain([&l.header]));
    if !g.labels.iter().chain(loop_ids).all(|&l| is_label(l)) {
        return Err(corrupt("label table references a non-label"));
    }
    if !ok(g.root) || !is_label(g.entry) || !g.inputs.iter().all(|i| ok(i.node)) {
        return Err(corrupt("root, entry or input id out of range"));
    }
    Ok(())
}
