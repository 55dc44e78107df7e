//! Direct interpreter for the raw IR. Each instruction keeps its native
//! meaning (bitwise ops act on the integer bits, `select` picks a side,
//! comparisons compare signed integers), so it serves as the reference
//! the lowered graph is checked against.

use std::collections::{BTreeMap, HashMap};

use super::matvec;
use crate::field::{Fp, P};
use crate::ir::{BinOp, Function, InstKind, IrType, IrValue};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrEvalError {
    #[error("more than {cap} block entries")]
    NonTerminating { cap: u64 },
    #[error("missing value for parameter %{0}")]
    MissingInput(String),
    #[error("use of undefined value {0}")]
    Undefined(String),
    #[error("load of {lanes} elements at offset {offset} outside a {len}-element parameter")]
    LoadOutOfBounds { offset: i64, lanes: u32, len: usize },
    #[error("cannot interpret: {0}")]
    Unsupported(String),
}

#[derive(Clone, Debug)]
enum V {
    Ints(Vec<Fp>),
    Ptr { param: usize, off: i64 },
    Layer(Vec<Fp>),
}

struct Env<'a> {
    f: &'a Function,
    inputs: Vec<Vec<Fp>>,
    locals: HashMap<&'a str, V>,
    layers: Vec<Vec<Fp>>,
}

/// Runs `f` on inputs keyed by parameter name. Pointer parameters map to
/// their element arrays, scalar parameters to one value per lane.
pub fn interpret_ir(f: &Function, inputs: &BTreeMap<String, Vec<Fp>>, cap: u64) -> Result<Vec<Fp>, IrEvalError> {
    let inputs = f
        .params
        .iter()
        .map(|p| inputs.get(&p.name).cloned().ok_or_else(|| IrEvalError::MissingInput(p.name.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut env = Env { f, inputs, locals: HashMap::new(), layers: Vec::new() };
    for (i, p) in f.params.iter().enumerate() {
        let v = if p.ty == IrType::Ptr { V::Ptr { param: i, off: 0 } } else { V::Ints(env.inputs[i].clone()) };
        env.locals.insert(p.name.as_str(), v);
    }
    let mut cur = f.blocks.first().ok_or_else(|| IrEvalError::Unsupported("empty function".into()))?;
    let mut pred: Option<&str> = None;
    for _ in 0..cap {
        let mut phis = Vec::new();
        for inst in &cur.insts {
            if let InstKind::Phi { ty, incoming } = &inst.kind {
                let (v, _) = incoming
                    .iter()
                    .find(|(_, l)| Some(l.as_str()) == pred)
                    .ok_or_else(|| IrEvalError::Undefined(format!("phi input from {pred:?}")))?;
                phis.push((inst.result.as_deref().unwrap(), env.value(v, ty)?));
            }
        }
        env.locals.extend(phis);
        for inst in &cur.insts {
            let out = match &inst.kind {
                InstKind::Phi { .. } | InstKind::Store { .. } => continue,
                InstKind::Binary { op, ty, lhs, rhs } => {
                    let (a, b) = (env.ints(lhs, ty)?, env.ints(rhs, ty)?);
                    V::Ints(a.iter().zip(&b).map(|(&x, &y)| binary(*op, x, y)).collect())
                }
                InstKind::Icmp { pred, ty, lhs, rhs } => {
                    let (a, b) = (env.ints(lhs, ty)?, env.ints(rhs, ty)?);
                    V::Ints(a.iter().zip(&b).map(|(x, y)| Fp::new(pred.eval(x.signed(), y.signed()) as u32)).collect())
                }
                InstKind::Select { cond, on_true, on_false } => {
                    let c = env.ints(&cond.value, &cond.ty)?;
                    let t = env.ints(&on_true.value, &on_true.ty)?;
                    let e = env.ints(&on_false.value, &on_false.ty)?;
                    V::Ints((0..t.len()).map(|i| if c[i % c.len()].is_zero() { e[i] } else { t[i] }).collect())
                }
                InstKind::Zext { value, .. } => env.value(&value.value, &value.ty)?,
                InstKind::Gep { source, base, indices } => {
                    let V::Ptr { param, mut off } = env.value(base, &IrType::Ptr)? else {
                        return Err(IrEvalError::Unsupported(format!("getelementptr on {base}")));
                    };
                    let mut ty = source.clone();
                    for (k, idx) in indices.iter().enumerate() {
                        if k > 0 {
                            ty = match ty {
                                IrType::Array { elem, .. } => *elem,
                                _ => IrType::I32,
                            };
                        }
                        let i = env.ints(&idx.value, &idx.ty)?[0].signed();
                        off += match &ty {
                            IrType::Int(8) => i / 4,
                            t => i * words(t),
                        };
                    }
                    V::Ptr { param, off }
                }
                InstKind::Load { ty, ptr } => {
                    let V::Ptr { param, off } = env.value(ptr, &IrType::Ptr)? else {
                        return Err(IrEvalError::Unsupported(format!("load through {ptr}")));
                    };
                    let data = &env.inputs[param];
                    let lanes = ty.lanes();
                    if off < 0 || off as usize + lanes as usize > data.len() {
                        return Err(IrEvalError::LoadOutOfBounds { offset: off, lanes, len: data.len() });
                    }
                    V::Ints(data[off as usize..off as usize + lanes as usize].to_vec())
                }
                InstKind::Call { callee, args, .. } => {
                    if callee.starts_with("llvm.var.annotation") {
                        continue;
                    }
                    if callee == "mark_linear_layer" {
                        let arr = |k: usize| match env.value(&args[k].value, &args[k].ty)? {
                            V::Ptr { param, .. } => Ok(env.inputs[param].clone()),
                            _ => Err(IrEvalError::Unsupported("linear layer operand".into())),
                        };
                        let dim = |k: usize| match args[k].value {
                            IrValue::Int(d) => Ok(d as usize),
                            _ => Err(IrEvalError::Unsupported("runtime layer dimension".into())),
                        };
                        let (din, dout) = (dim(3)?, dim(4)?);
                        let y = matvec(&arr(1)?, &arr(0)?, &arr(2)?, din, dout);
                        env.layers.push(y.clone());
                        V::Layer(y)
                    } else {
                        let x = env.ints(&args[0].value, &args[0].ty)?;
                        if callee.starts_with("llvm.vector.reduce.add.") {
                            V::Ints(vec![x.iter().fold(Fp::ZERO, |s, &v| s + v)])
                        } else if callee.starts_with("llvm.vector.reduce.mul.") {
                            V::Ints(vec![x.iter().fold(Fp::ONE, |s, &v| s * v)])
                        } else {
                            return Err(IrEvalError::Unsupported(callee.clone()));
                        }
                    }
                }
                InstKind::Br { target } => {
                    pred = Some(cur.label.as_str());
                    cur = env.block(target)?;
                    break;
                }
                InstKind::CondBr { cond, if_true, if_false } => {
                    let c = env.ints(cond, &IrType::I1)?[0];
                    pred = Some(cur.label.as_str());
                    cur = env.block(if c.is_zero() { if_false } else { if_true })?;
                    break;
                }
                InstKind::Ret { value } => {
                    return match value {
                        Some(op) if op.ty.is_int_like() => env.ints(&op.value, &op.ty),
                        Some(op) => match env.value(&op.value, &op.ty) {
                            Ok(V::Layer(y)) => Ok(y),
                            _ => Ok(env.layers.last().cloned().unwrap_or_default()),
                        },
                        None => Ok(env.layers.last().cloned().unwrap_or_default()),
                    };
                }
            };
            if let Some(r) = inst.result.as_deref() {
                env.locals.insert(r, out);
            }
        }
    }
    Err(IrEvalError::NonTerminating { cap })
}

fn binary(op: BinOp, x: Fp, y: Fp) -> Fp {
    match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Shl => Fp::from_u64((((x.value() as u128) << (y.value() % 128)) % P as u128) as u64),
        BinOp::And => Fp::new(x.value() & y.value()),
        BinOp::Or => Fp::new(x.value() | y.value()),
        BinOp::Xor => Fp::new(x.value() ^ y.value()),
    }
}

/// Size of `t` in 32-bit words.
fn words(t: &IrType) -> i64 {
    match t {
        IrType::Vector { lanes, .. } => *lanes as i64,
        IrType::Array { len, elem } => *len as i64 * words(elem),
        _ => 1,
    }
}

impl<'a> Env<'a> {
    fn block(&self, label: &str) -> Result<&'a crate::ir::Block, IrEvalError> {
        self.f.block(label).ok_or_else(|| IrEvalError::Undefined(format!("label %{label}")))
    }

    fn value(&self, v: &IrValue, ty: &IrType) -> Result<V, IrEvalError> {
        let lanes = ty.lanes() as usize;
        Ok(match v {
            IrValue::Local(n) => self.locals.get(n.as_str()).cloned().ok_or_else(|| IrEvalError::Undefined(format!("%{n}")))?,
            IrValue::Int(k) => V::Ints(vec![Fp::from_i64(*k); lanes]),
            IrValue::Vector(ks) => V::Ints(ks.iter().map(|&k| Fp::from_i64(k)).collect()),
            IrValue::ZeroInit => V::Ints(vec![Fp::ZERO; lanes]),
            other => return Err(IrEvalError::Unsupported(other.to_string())),
        })
    }

    fn ints(&self, v: &IrValue, ty: &IrType) -> Result<Vec<Fp>, IrEvalError> {
        match self.value(v, ty)? {
            V::Ints(x) => Ok(x),
            _ => Err(IrEvalError::Unsupported(format!("{v} is not an integer value"))),
        }
    }
}
