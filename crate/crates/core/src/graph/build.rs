//! Lowering from a validated entry function to a [`CircuitGraph`].
//!
//! Blocks are visited in reverse postorder so every non-phi use sees its
//! definition first. Pointer values never become nodes: they are tracked as
//! `(parameter, offset)` pairs and folded into `Load` nodes. Comparisons are
//! emitted as `Compare` and rewritten into arithmetic once privacy is known.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use super::loops::Cfg;
use super::{CircuitGraph, InputDesc, LoopInfo, Node, NodeId, NodeKind};
use crate::field::Fp;
use crate::ir::{BinOp, EntryView, InstKind, Instruction, IrType, IrValue, Predicate, Privacy};

#[derive(Clone, Debug, Default)]
pub struct BuildOptions {
    /// Element counts for pointer parameters, overriding inference.
    pub param_len: HashMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("line {line}: no lowering for '{inst}'")]
    UnloweredInstruction { line: u32, inst: String },
    #[error("line {line}: pointer {name} does not trace to a parameter")]
    UntraceableBase { line: u32, name: String },
    #[error("line {line}: linear layer dimensions must be positive compile-time constants")]
    NonConstantDims { line: u32 },
    #[error("line {line}: comparison on private operands is only supported as eq/ne on 0/1 values")]
    SecretComparisonUnsupported { line: u32 },
    #[error("irreducible control flow at block '{0}'")]
    IrreducibleControlFlow(String),
    #[error("cannot infer the element count of parameter %{0}; supply it explicitly")]
    UnknownParamLength(String),
    #[error("line {line}: load index depends on private data")]
    PrivateIndex { line: u32 },
    #[error("line {line}: load at element {index} is outside parameter %{param} of length {len}")]
    IndexOutOfBounds { line: u32, param: String, index: i64, len: u64 },
    #[error("line {line}: bitwise '{op}' needs operands known to be 0 or 1")]
    UnsupportedBitwise { line: u32, op: String },
    #[error("line {line}: {what}")]
    UnsupportedShape { line: u32, what: String },
    #[error("line {line}: shift amount must be a constant")]
    NonConstantShift { line: u32 },
    #[error("line {line}: use of undefined value %{name}")]
    UndefinedValue { line: u32, name: String },
    #[error("entry function has more than one reachable return")]
    MultipleReturns,
    #[error("entry function has no reachable return")]
    NoReturn,
}

type Key = (u8, u32, u32, u32, u32);

struct Draft {
    kind: NodeKind,
    lanes: u32,
    operands: Vec<usize>,
    block: Option<usize>,
    key: Key,
    /// Value is known to be 0 or 1 in every lane.
    bit: bool,
    privacy: Privacy,
}

#[derive(Clone, Debug)]
enum Val {
    Node(usize),
    Ptr { param: usize, off_node: Option<usize>, off_const: i64 },
    Layer(usize),
}

struct PendingPhi<'a> {
    draft: usize,
    ty: &'a IrType,
    incoming: &'a [(IrValue, String)],
    line: u32,
}

struct Compare {
    draft: usize,
    block: usize,
    line: u32,
}

#[derive(Default, Clone)]
struct Extent {
    max_const: u64,
    dynamic: bool,
    layer: Option<u64>,
}

struct Builder<'v, 'm> {
    view: &'v EntryView<'m>,
    drafts: Vec<Draft>,
    env: HashMap<&'m str, Val>,
    consts: HashMap<Vec<Fp>, usize>,
    label_of: Vec<Option<usize>>,
    chains: Vec<Vec<usize>>,
    inputs: Vec<usize>,
    extents: Vec<Extent>,
    cur_block: usize,
    cur_inst: u32,
    sub: u32,
    phis: Vec<PendingPhi<'m>>,
    compares: Vec<Compare>,
    loads: Vec<(usize, u32)>,
    layers: Vec<usize>,
    root: Option<usize>,
}

fn size_units(ty: &IrType, line: u32) -> Result<Units, BuildError> {
    match ty {
        IrType::Int(32) => Ok(Units::Words(1)),
        IrType::Int(8) => Ok(Units::Bytes),
        IrType::Vector { lanes, bits: 32 } => Ok(Units::Words(*lanes as i64)),
        IrType::Array { len, elem } => match size_units(elem, line)? {
            Units::Words(w) => Ok(Units::Words(w * *len as i64)),
            Units::Bytes => Err(shape(line, "byte arrays cannot be indexed")),
        },
        other => Err(shape(line, &format!("getelementptr over {other}"))),
    }
}

#[derive(Clone, Copy)]
enum Units {
    Words(i64),
    /// `i8` source type: only constant, word-aligned offsets are allowed.
    Bytes,
}

fn shape(line: u32, what: &str) -> BuildError {
    BuildError::UnsupportedShape { line, what: what.to_string() }
}

/// Builds the circuit graph for a validated entry function.
pub fn build_graph(view: &EntryView<'_>, opts: &BuildOptions) -> Result<CircuitGraph, BuildError> {
    let func = view.function;
    let nblocks = func.blocks.len();
    let index: HashMap<&str, usize> = func.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    let succs: Vec<Vec<usize>> =
        func.blocks.iter().map(|b| b.successors().iter().map(|l| index[*l]).collect()).collect();
    let cfg = Cfg::new(succs);
    let rpo = cfg.reverse_postorder();

    let mut b = Builder {
        view,
        drafts: Vec::new(),
        env: HashMap::new(),
        consts: HashMap::new(),
        label_of: vec![None; nblocks],
        chains: vec![Vec::new(); nblocks],
        inputs: Vec::new(),
        extents: vec![Extent::default(); view.params.len()],
        cur_block: 0,
        cur_inst: 0,
        sub: 0,
        phis: Vec::new(),
        compares: Vec::new(),
        loads: Vec::new(),
        layers: Vec::new(),
        root: None,
    };

    for (i, p) in view.params.iter().enumerate() {
        let id = b.drafts.len();
        b.drafts.push(Draft {
            kind: NodeKind::Input { param: i as u32 },
            lanes: p.ty.lanes(),
            operands: Vec::new(),
            block: None,
            key: (0, i as u32, 0, 0, 0),
            bit: p.ty.is_bit(),
            privacy: p.privacy,
        });
        b.inputs.push(id);
        let val = if p.ty == IrType::Ptr {
            Val::Ptr { param: i, off_node: None, off_const: 0 }
        } else {
            Val::Node(id)
        };
        b.env.insert(func.params[i].name.as_str(), val);
    }
    let mut reachable = vec![false; nblocks];
    for &blk in &rpo {
        reachable[blk] = true;
    }
    for (i, blk) in func.blocks.iter().enumerate() {
        if !reachable[i] {
            continue;
        }
        let id = b.drafts.len();
        b.drafts.push(Draft {
            kind: NodeKind::BlockLabel { name: blk.label.clone() },
            lanes: 1,
            operands: Vec::new(),
            block: None,
            key: (2, i as u32, 0, 0, 0),
            bit: false,
            privacy: Privacy::Public,
        });
        b.label_of[i] = Some(id);
    }

    for &blk in &rpo {
        b.cur_block = blk;
        for (ii, inst) in func.blocks[blk].insts.iter().enumerate() {
            b.cur_inst = ii as u32 + 1;
            b.sub = 0;
            b.lower(inst)?;
        }
    }
    b.resolve_phis()?;
    b.propagate_privacy();
    b.rewrite_compares()?;
    b.propagate_privacy();
    for &(draft, line) in &b.loads {
        let start = b.drafts[draft].operands[1];
        if b.drafts[start].privacy.is_private() {
            return Err(BuildError::PrivateIndex { line });
        }
    }
    let root = b.root.ok_or(BuildError::NoReturn)?;
    let lens = b.input_lengths(opts)?;
    for (i, &len) in lens.iter().enumerate() {
        if view.params[i].ty == IrType::Ptr {
            b.drafts[b.inputs[i]].lanes = u32::try_from(len).map_err(|_| shape(0, "parameter too long"))?;
        }
    }

    let loops = cfg.natural_loops().map_err(|blk| BuildError::IrreducibleControlFlow(func.blocks[blk].label.clone()))?;
    b.finish(root, lens, &loops)
}

impl<'v, 'm> Builder<'v, 'm> {
    fn line(&self) -> u32 {
        self.view.function.blocks[self.cur_block].insts[self.cur_inst as usize - 1].loc.line
    }

    fn push(&mut self, kind: NodeKind, lanes: u32, operands: Vec<usize>, bit: bool) -> usize {
        let id = self.drafts.len();
        self.sub += 1;
        self.drafts.push(Draft {
            kind,
            lanes,
            operands,
            block: self.label_of[self.cur_block],
            key: (2, self.cur_block as u32, self.cur_inst, self.sub, 0),
            bit,
            privacy: Privacy::Public,
        });
        self.chains[self.cur_block].push(id);
        id
    }

    fn konst(&mut self, values: Vec<Fp>) -> usize {
        if let Some(&id) = self.consts.get(&values) {
            return id;
        }
        let id = self.drafts.len();
        let bit = values.iter().all(|v| v.value() <= 1);
        self.drafts.push(Draft {
            kind: NodeKind::Const { values: values.clone() },
            lanes: values.len() as u32,
            operands: Vec::new(),
            block: None,
            key: (1, self.consts.len() as u32, 0, 0, 0),
            bit,
            privacy: Privacy::Public,
        });
        self.consts.insert(values, id);
        id
    }

    fn splat(&mut self, v: Fp, lanes: u32) -> usize {
        self.konst(vec![v; lanes as usize])
    }

    fn val(&mut self, v: &'m IrValue, ty: &IrType) -> Result<Val, BuildError> {
        let lanes = ty.lanes() as usize;
        let line = self.line();
        Ok(match v {
            IrValue::Local(n) => self
                .env
                .get(n.as_str())
                .cloned()
                .ok_or_else(|| BuildError::UndefinedValue { line, name: n.clone() })?,
            IrValue::Int(i) => Val::Node(self.konst(vec![Fp::from_i64(*i); lanes])),
            IrValue::Vector(vs) => Val::Node(self.konst(vs.iter().map(|&i| Fp::from_i64(i)).collect())),
            IrValue::ZeroInit => Val::Node(self.konst(vec![Fp::ZERO; lanes])),
            IrValue::Null | IrValue::Global(_) => {
                return Err(BuildError::UntraceableBase { line, name: v.to_string() });
            }
        })
    }

    fn node_of(&mut self, v: &'m IrValue, ty: &IrType) -> Result<usize, BuildError> {
        match self.val(v, ty)? {
            Val::Node(n) => Ok(n),
            _ => Err(shape(self.line(), &format!("pointer {v} used as an arithmetic value"))),
        }
    }

    fn arith(&mut self, op: BinOp, a: usize, b: usize, lanes: u32) -> usize {
        let kind = match (op, lanes > 1) {
            (BinOp::Add, false) => NodeKind::Adder,
            (BinOp::Add, true) => NodeKind::AddBatch,
            (BinOp::Sub, false) => NodeKind::Subtract,
            (BinOp::Sub, true) => NodeKind::SubBatch,
            (BinOp::Mul, false) => NodeKind::Multiplier,
            (BinOp::Mul, true) => NodeKind::MultBatch,
            _ => unreachable!("only add/sub/mul become arithmetic nodes"),
        };
        self.push(kind, lanes, vec![a, b], false)
    }

    fn define(&mut self, inst: &'m Instruction, val: Val) {
        if let Some(r) = &inst.result {
            self.env.insert(r.as_str(), val);
        }
    }

    fn lower(&mut self, inst: &'m Instruction) -> Result<(), BuildError> {
        let line = inst.loc.line;
        match &inst.kind {
            InstKind::Binary { op, ty, lhs, rhs } => {
                let lanes = ty.lanes();
                let a = self.node_of(lhs, ty)?;
                let out = match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul => {
                        if ty.is_bit() {
                            return Err(shape(line, "arithmetic on i1 values"));
                        }
                        let b = self.node_of(rhs, ty)?;
                        self.arith(*op, a, b, lanes)
                    }
                    BinOp::Shl => {
                        let k = match rhs {
                            IrValue::Int(k) => *k,
                            IrValue::Vector(ks) if ks.windows(2).all(|w| w[0] == w[1]) && !ks.is_empty() => ks[0],
                            _ => return Err(BuildError::NonConstantShift { line }),
                        };
                        if !(0..64).contains(&k) {
                            return Err(BuildError::NonConstantShift { line });
                        }
                        let c = self.splat(Fp::new(2).pow(k as u64), lanes);
                        self.arith(BinOp::Mul, a, c, lanes)
                    }
                    BinOp::And | BinOp::Or | BinOp::Xor => {
                        let b = self.node_of(rhs, ty)?;
                        if !(self.drafts[a].bit && self.drafts[b].bit) {
                            return Err(BuildError::UnsupportedBitwise { line, op: op.mnemonic().to_string() });
                        }
                        let out = match op {
                            BinOp::And => self.arith(BinOp::Mul, a, b, lanes),
                            BinOp::Or => {
                                let s = self.arith(BinOp::Add, a, b, lanes);
                                let m = self.arith(BinOp::Mul, a, b, lanes);
                                self.arith(BinOp::Sub, s, m, lanes)
                            }
                            _ => self.xor(a, b, lanes),
                        };
                        self.drafts[out].bit = true;
                        out
                    }
                };
                self.define(inst, Val::Node(out));
            }
            InstKind::Icmp { pred, ty, lhs, rhs } => {
                let a = self.node_of(lhs, ty)?;
                let b = self.node_of(rhs, ty)?;
                let id = self.push(NodeKind::Compare { pred: *pred }, ty.lanes(), vec![a, b], true);
                self.compares.push(Compare { draft: id, block: self.cur_block, line });
                self.define(inst, Val::Node(id));
            }
            InstKind::Select { cond, on_true, on_false } => {
                if cond.ty.lanes() != on_true.ty.lanes() {
                    return Err(shape(line, "select with a scalar condition over vector values"));
                }
                let lanes = on_true.ty.lanes();
                let c = self.node_of(&cond.value, &cond.ty)?;
                let t = self.node_of(&on_true.value, &on_true.ty)?;
                let f = self.node_of(&on_false.value, &on_false.ty)?;
                // f + c * (t - f)
                let d = self.arith(BinOp::Sub, t, f, lanes);
                let m = self.arith(BinOp::Mul, c, d, lanes);
                let out = self.arith(BinOp::Add, f, m, lanes);
                self.drafts[out].bit = self.drafts[t].bit && self.drafts[f].bit;
                self.define(inst, Val::Node(out));
            }
            InstKind::Zext { value, .. } => {
                let v = self.val(&value.value, &value.ty)?;
                self.define(inst, v);
            }
            InstKind::Load { ty, ptr } => {
                let name = ptr.to_string();
                let (param, off_node, off_const) = match self.val(ptr, &IrType::Ptr)? {
                    Val::Ptr { param, off_node, off_const } => (param, off_node, off_const),
                    _ => return Err(BuildError::UntraceableBase { line, name }),
                };
                if !matches!(ty, IrType::Int(32) | IrType::Vector { bits: 32, .. }) {
                    return Err(shape(line, &format!("load of {ty}")));
                }
                let lanes = ty.lanes();
                let start = match off_node {
                    None => {
                        if off_const < 0 {
                            let len = 0;
                            let param = self.view.params[param].name.clone();
                            return Err(BuildError::IndexOutOfBounds { line, param, index: off_const, len });
                        }
                        let e = &mut self.extents[param];
                        e.max_const = e.max_const.max(off_const as u64 + lanes as u64);
                        self.splat(Fp::from_i64(off_const), 1)
                    }
                    Some(n) => {
                        self.extents[param].dynamic = true;
                        if off_const == 0 {
                            n
                        } else {
                            let c = self.splat(Fp::from_i64(off_const), 1);
                            self.arith(BinOp::Add, n, c, 1)
                        }
                    }
                };
                let base = self.inputs[param];
                let id = self.push(NodeKind::Load, lanes, vec![base, start], false);
                self.loads.push((id, line));
                self.define(inst, Val::Node(id));
            }
            // stores carry no value into the circuit
            InstKind::Store { .. } => {}
            InstKind::Gep { source, base, indices } => {
                let name = base.to_string();
                let (param, mut off_node, mut off_const) = match self.val(base, &IrType::Ptr)? {
                    Val::Ptr { param, off_node, off_const } => (param, off_node, off_const),
                    _ => return Err(BuildError::UntraceableBase { line, name }),
                };
                let mut ty = source.clone();
                for (pos, idx) in indices.iter().enumerate() {
                    if pos > 0 {
                        ty = match ty {
                            IrType::Array { elem, .. } => *elem,
                            IrType::Vector { bits: 32, .. } => IrType::I32,
                            other => return Err(shape(line, &format!("cannot index into {other}"))),
                        };
                    }
                    let units = size_units(&ty, line)?;
                    match (&idx.value, units) {
                        (IrValue::Int(k), Units::Words(w)) => off_const += k * w,
                        (IrValue::Int(k), Units::Bytes) if k % 4 == 0 => off_const += k / 4,
                        (_, Units::Bytes) => return Err(shape(line, "byte offset that is not a constant multiple of 4")),
                        (v, Units::Words(w)) => {
                            let n = self.node_of(v, &idx.ty)?;
                            let scaled = if w == 1 {
                                n
                            } else {
                                let c = self.splat(Fp::from_i64(w), 1);
                                self.arith(BinOp::Mul, n, c, 1)
                            };
                            off_node = Some(match off_node {
                                None => scaled,
                                Some(o) => self.arith(BinOp::Add, o, scaled, 1),
                            });
                        }
                    }
                }
                self.define(inst, Val::Ptr { param, off_node, off_const });
            }
            InstKind::Phi { ty, incoming } => {
                if !ty.is_int_like() {
                    let name = inst.result.clone().unwrap_or_default();
                    return Err(BuildError::UntraceableBase { line, name: format!("%{name}") });
                }
                let id = self.push(NodeKind::Phi { incoming: Vec::new() }, ty.lanes(), Vec::new(), false);
                self.phis.push(PendingPhi { draft: id, ty, incoming, line });
                self.define(inst, Val::Node(id));
            }
            InstKind::Call { callee, args, .. } => {
                if callee.starts_with("llvm.var.annotation") {
                    return Ok(());
                }
                if callee == "mark_linear_layer" {
                    return self.lower_linear_layer(inst, args);
                }
                let kind = if callee.starts_with("llvm.vector.reduce.add.") {
                    NodeKind::ReduceAdd
                } else if callee.starts_with("llvm.vector.reduce.mul.") {
                    NodeKind::ReduceMul
                } else {
                    return Err(BuildError::UnloweredInstruction { line, inst: inst.to_string() });
                };
                let [arg] = args.as_slice() else {
                    return Err(BuildError::UnloweredInstruction { line, inst: inst.to_string() });
                };
                let v = self.node_of(&arg.value, &arg.ty)?;
                let id = self.push(kind, 1, vec![v], false);
                self.define(inst, Val::Node(id));
            }
            InstKind::Br { target } => {
                let t = self.target(target);
                self.push(NodeKind::Branch { targets: vec![t] }, 1, Vec::new(), false);
            }
            InstKind::CondBr { cond, if_true, if_false } => {
                let c = self.node_of(cond, &IrType::I1)?;
                let t = self.target(if_true);
                let f = self.target(if_false);
                self.push(NodeKind::Branch { targets: vec![t, f] }, 1, vec![c], false);
            }
            InstKind::Ret { value } => {
                if self.root.is_some() {
                    return Err(BuildError::MultipleReturns);
                }
                let out = match value {
                    Some(op) if op.ty.is_int_like() => Some(self.node_of(&op.value, &op.ty)?),
                    Some(op) => match self.val(&op.value, &op.ty) {
                        Ok(Val::Layer(l)) => Some(l),
                        _ => self.layers.last().copied(),
                    },
                    None => self.layers.last().copied(),
                };
                let lanes = out.map(|o| self.drafts[o].lanes).unwrap_or(1);
                let id = self.push(NodeKind::Root, lanes, out.into_iter().collect(), false);
                self.root = Some(id);
            }
        }
        Ok(())
    }

    fn xor(&mut self, a: usize, b: usize, lanes: u32) -> usize {
        // a + b - 2ab
        let s = self.arith(BinOp::Add, a, b, lanes);
        let m = self.arith(BinOp::Mul, a, b, lanes);
        let two = self.splat(Fp::new(2), lanes);
        let m2 = self.arith(BinOp::Mul, m, two, lanes);
        self.arith(BinOp::Sub, s, m2, lanes)
    }

    fn target(&self, label: &str) -> NodeId {
        let func = self.view.function;
        let idx = func.blocks.iter().position(|b| b.label == label).expect("labels resolved by the parser");
        self.label_of[idx].expect("successor of a reachable block is reachable") as NodeId
    }

    fn lower_linear_layer(&mut self, inst: &'m Instruction, args: &'m [crate::ir::Operand]) -> Result<(), BuildError> {
        let line = inst.loc.line;
        if args.len() != 5 {
            return Err(BuildError::UnloweredInstruction { line, inst: inst.to_string() });
        }
        let mut params = [0usize; 3];
        for (slot, arg) in params.iter_mut().zip(&args[..3]) {
            match self.val(&arg.value, &arg.ty)? {
                Val::Ptr { param, off_node: None, off_const: 0 } => *slot = param,
                _ => return Err(BuildError::UntraceableBase { line, name: arg.value.to_string() }),
            }
        }
        let dim = |op: &crate::ir::Operand| match op.value {
            IrValue::Int(v) if v > 0 && v <= u32::MAX as i64 => Ok(v as u32),
            _ => Err(BuildError::NonConstantDims { line }),
        };
        let din = dim(&args[3])?;
        let dout = dim(&args[4])?;
        for (slot, len) in params.iter().zip([din as u64, din as u64 * dout as u64, dout as u64]) {
            let e = &mut self.extents[*slot];
            match e.layer {
                Some(prev) if prev != len => {
                    return Err(shape(line, "parameter used by linear layers of different shapes"));
                }
                _ => e.layer = Some(len),
            }
        }
        let ops = params.iter().map(|&p| self.inputs[p]).collect();
        let id = self.push(NodeKind::LinearLayer { din, dout }, dout, ops, false);
        self.layers.push(id);
        self.define(inst, Val::Layer(id));
        Ok(())
    }

    fn resolve_phis(&mut self) -> Result<(), BuildError> {
        let func = self.view.function;
        let phis = std::mem::take(&mut self.phis);
        for phi in phis {
            let block_of_phi = self.drafts[phi.draft].key.1 as usize;
            self.cur_block = block_of_phi;
            self.cur_inst = phi.draft_inst(&self.drafts);
            let mut incoming = Vec::new();
            for (v, label) in phi.incoming {
                let idx = func.blocks.iter().position(|b| &b.label == label).expect("labels resolved by the parser");
                let Some(l) = self.label_of[idx] else { continue };
                let n = match self.val(v, phi.ty) {
                    Ok(Val::Node(n)) => n,
                    Ok(_) => return Err(BuildError::UntraceableBase { line: phi.line, name: v.to_string() }),
                    Err(e) => return Err(e),
                };
                incoming.push((l as NodeId, n as NodeId));
            }
            self.drafts[phi.draft].kind = NodeKind::Phi { incoming };
        }
        Ok(())
    }

    fn propagate_privacy(&mut self) {
        let params: Vec<Privacy> = self.view.params.iter().map(|p| p.privacy).collect();
        loop {
            let mut changed = false;
            for i in 0..self.drafts.len() {
                let d = &self.drafts[i];
                let p = match &d.kind {
                    NodeKind::Input { param } => params[*param as usize],
                    NodeKind::Const { .. } | NodeKind::BlockLabel { .. } => Privacy::Public,
                    NodeKind::Phi { incoming } => incoming
                        .iter()
                        .fold(Privacy::Public, |acc, &(_, v)| acc.join(self.drafts[v as usize].privacy)),
                    _ => d.operands.iter().fold(Privacy::Public, |acc, &o| acc.join(self.drafts[o].privacy)),
                };
                if p != self.drafts[i].privacy {
                    self.drafts[i].privacy = p;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn rewrite_compares(&mut self) -> Result<(), BuildError> {
        let compares = std::mem::take(&mut self.compares);
        for c in compares {
            let d = &self.drafts[c.draft];
            let [a, b] = [d.operands[0], d.operands[1]];
            if !(self.drafts[a].privacy.is_private() || self.drafts[b].privacy.is_private()) {
                continue;
            }
            let NodeKind::Compare { pred } = d.kind else { unreachable!() };
            if !pred.is_equality() || !(self.drafts[a].bit && self.drafts[b].bit) {
                return Err(BuildError::SecretComparisonUnsupported { line: c.line });
            }
            let lanes = d.lanes;
            let key = d.key;
            let pos = self.chains[c.block].iter().position(|&x| x == c.draft).unwrap();
            // helpers go right before the comparison in the block chain
            let mut helpers = Vec::new();
            let mut mk = |this: &mut Self, kind: NodeKind, ops: Vec<usize>| {
                let id = this.drafts.len();
                this.drafts.push(Draft {
                    kind,
                    lanes,
                    operands: ops,
                    block: this.label_of[c.block],
                    key: (key.0, key.1, key.2, key.3, helpers.len() as u32 + 1),
                    bit: false,
                    privacy: Privacy::Public,
                });
                helpers.push(id);
                id
            };
            let batch = lanes > 1;
            let (add, sub, mul) = if batch {
                (NodeKind::AddBatch, NodeKind::SubBatch, NodeKind::MultBatch)
            } else {
                (NodeKind::Adder, NodeKind::Subtract, NodeKind::Multiplier)
            };
            let two = self.splat(Fp::new(2), lanes);
            let s = mk(self, add, vec![a, b]);
            let m = mk(self, mul.clone(), vec![a, b]);
            let m2 = mk(self, mul, vec![m, two]);
            let final_ops = match pred {
                Predicate::Ne => vec![s, m2],
                _ => {
                    let x = mk(self, sub.clone(), vec![s, m2]);
                    let one = self.splat(Fp::ONE, lanes);
                    vec![one, x]
                }
            };
            let chain = &mut self.chains[c.block];
            for (k, h) in helpers.iter().enumerate() {
                chain.insert(pos + k, *h);
            }
            let d = &mut self.drafts[c.draft];
            d.kind = sub;
            d.operands = final_ops;
        }
        Ok(())
    }

    fn input_lengths(&self, opts: &BuildOptions) -> Result<Vec<u64>, BuildError> {
        let mut lens = Vec::with_capacity(self.view.params.len());
        for (i, p) in self.view.params.iter().enumerate() {
            if p.ty != IrType::Ptr {
                lens.push(p.ty.lanes() as u64);
                continue;
            }
            let e = &self.extents[i];
            let declared = opts
                .param_len
                .get(&p.name)
                .copied()
                .or(e.layer)
                .or(p.dereferenceable.map(|bytes| bytes / 4));
            let len = match declared {
                Some(l) => l,
                None if e.dynamic => return Err(BuildError::UnknownParamLength(p.name.clone())),
                None => e.max_const,
            };
            if e.max_const > len {
                let line = self
                    .loads
                    .iter()
                    .find(|(d, _)| self.drafts[*d].operands[0] == self.inputs[i])
                    .map(|(_, l)| *l)
                    .unwrap_or(0);
                return Err(BuildError::IndexOutOfBounds {
                    line,
                    param: p.name.clone(),
                    index: e.max_const as i64 - 1,
                    len,
                });
            }
            lens.push(len);
        }
        Ok(lens)
    }

    fn finish(self, root: usize, lens: Vec<u64>, loops: &[super::loops::NaturalLoop]) -> Result<CircuitGraph, BuildError> {
        let n = self.drafts.len();
        // Kahn's algorithm over operand edges, ties broken by source position
        let mut indeg = vec![0usize; n];
        let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, d) in self.drafts.iter().enumerate() {
            for &o in &d.operands {
                indeg[i] += 1;
                users[o].push(i);
            }
        }
        let mut heap: BinaryHeap<Reverse<(Key, usize)>> =
            (0..n).filter(|&i| indeg[i] == 0).map(|i| Reverse((self.drafts[i].key, i))).collect();
        let mut new_id = vec![u32::MAX; n];
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse((_, i))) = heap.pop() {
            new_id[i] = order.len() as u32;
            order.push(i);
            for &u in &users[i] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    heap.push(Reverse((self.drafts[u].key, u)));
                }
            }
        }
        assert_eq!(order.len(), n, "operand edges form a cycle");

        let map = |i: usize| new_id[i];
        let mut next: Vec<Option<NodeId>> = vec![None; n];
        for (blk, chain) in self.chains.iter().enumerate() {
            let Some(label) = self.label_of[blk] else { continue };
            let mut prev = label;
            for &c in chain {
                next[prev] = Some(map(c));
                prev = c;
            }
        }
        let mut nodes = Vec::with_capacity(n);
        for &i in &order {
            let d = &self.drafts[i];
            let kind = match &d.kind {
                NodeKind::Phi { incoming } => NodeKind::Phi {
                    incoming: incoming.iter().map(|&(l, v)| (map(l as usize), map(v as usize))).collect(),
                },
                NodeKind::Branch { targets } => {
                    NodeKind::Branch { targets: targets.iter().map(|&t| map(t as usize)).collect() }
                }
                other => other.clone(),
            };
            nodes.push(Node {
                id: map(i),
                kind,
                lanes: d.lanes,
                operands: d.operands.iter().map(|&o| map(o)).collect(),
                block: d.block.map(map),
                privacy: d.privacy,
                next: next[i],
            });
        }
        let labels: Vec<NodeId> = self.label_of.iter().flatten().map(|&l| map(l)).collect();
        let inputs = self
            .view
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| InputDesc { name: p.name.clone(), privacy: p.privacy, len: lens[i], node: map(self.inputs[i]) })
            .collect();
        let label = |b: usize| map(self.label_of[b].expect("loop blocks are reachable"));
        let loops: BTreeMap<NodeId, LoopInfo> = loops
            .iter()
            .map(|l| {
                let mut members: Vec<NodeId> = l.members.iter().map(|&b| label(b)).collect();
                members.sort_unstable();
                let mut exits: Vec<NodeId> = l.exits.iter().map(|&b| label(b)).collect();
                exits.sort_unstable();
                (label(l.header), LoopInfo { header: label(l.header), members, exits })
            })
            .collect();
        let mut g = CircuitGraph {
            nodes,
            root: map(root),
            entry: label(0),
            labels,
            inputs,
            loops,
            const_pool: BTreeMap::new(),
        };
        g.rebuild_const_pool();
        Ok(g)
    }
}

impl PendingPhi<'_> {
    fn draft_inst(&self, drafts: &[Draft]) -> u32 {
        drafts[self.draft].key.2
    }
}
