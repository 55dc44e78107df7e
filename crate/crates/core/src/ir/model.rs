//! In-memory form of the accepted SSA-IR subset.

use std::fmt;

/// Source position of an instruction. Positions are diagnostics-only and do
/// not participate in structural equality.
#[derive(Clone, Copy, Debug, Default)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Loc {
    fn eq(&self, _: &Loc) -> bool {
        true
    }
}

impl Eq for Loc {}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IrType {
    /// Scalar integer of width 1, 32 or 64 (64 only as an address index).
    Int(u32),
    /// `<lanes x i32>`
    Vector { lanes: u32, bits: u32 },
    Ptr,
    Label,
    Void,
    /// `[len x elem]`, only used as a GEP source type or for string globals.
    Array { len: u64, elem: Box<IrType> },
}

impl IrType {
    pub const I1: IrType = IrType::Int(1);
    pub const I32: IrType = IrType::Int(32);

    pub fn lanes(&self) -> u32 {
        match self {
            IrType::Vector { lanes, .. } => *lanes,
            _ => 1,
        }
    }

    pub fn is_vector(&self) -> bool {
        matches!(self, IrType::Vector { .. })
    }

    pub fn is_int_like(&self) -> bool {
        matches!(self, IrType::Int(_) | IrType::Vector { .. })
    }

    pub fn is_bit(&self) -> bool {
        matches!(self, IrType::Int(1) | IrType::Vector { bits: 1, .. })
    }
}

impl fmt::Display for IrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrType::Int(w) => write!(f, "i{w}"),
            IrType::Vector { lanes, bits } => write!(f, "<{lanes} x i{bits}>"),
            IrType::Ptr => write!(f, "ptr"),
            IrType::Label => write!(f, "label"),
            IrType::Void => write!(f, "void"),
            IrType::Array { len, elem } => write!(f, "[{len} x {elem}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IrValue {
    Local(String),
    Global(String),
    Int(i64),
    Vector(Vec<i64>),
    ZeroInit,
    Null,
}

impl fmt::Display for IrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrValue::Local(n) => write!(f, "%{n}"),
            IrValue::Global(n) => write!(f, "@{n}"),
            IrValue::Int(v) => write!(f, "{v}"),
            IrValue::Vector(vs) => {
                write!(f, "<")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "i32 {v}")?;
                }
                write!(f, ">")
            }
            IrValue::ZeroInit => write!(f, "zeroinitializer"),
            IrValue::Null => write!(f, "null"),
        }
    }
}

/// A value with its declared type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operand {
    pub ty: IrType,
    pub value: IrValue,
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.ty, self.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Shl,
    And,
    Or,
    Xor,
}

impl BinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Shl => "shl",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Eq,
    Ne,
    Slt,
    Sgt,
    Sle,
    Sge,
}

impl Predicate {
    pub fn parse(s: &str) -> Option<Predicate> {
        Some(match s {
            "eq" => Predicate::Eq,
            "ne" => Predicate::Ne,
            "slt" => Predicate::Slt,
            "sgt" => Predicate::Sgt,
            "sle" => Predicate::Sle,
            "sge" => Predicate::Sge,
            _ => return None,
        })
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Predicate::Eq => "eq",
            Predicate::Ne => "ne",
            Predicate::Slt => "slt",
            Predicate::Sgt => "sgt",
            Predicate::Sle => "sle",
            Predicate::Sge => "sge",
        }
    }

    pub fn is_equality(self) -> bool {
        matches!(self, Predicate::Eq | Predicate::Ne)
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            Predicate::Eq => a == b,
            Predicate::Ne => a != b,
            Predicate::Slt => a < b,
            Predicate::Sgt => a > b,
            Predicate::Sle => a <= b,
            Predicate::Sge => a >= b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    Shl,
    And,
    Or,
    Xor,
    Icmp,
    Select,
    Zext,
    Load,
    Store,
    GetElementPtr,
    Br,
    Ret,
    Phi,
    Call,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstKind {
    Binary { op: BinOp, ty: IrType, lhs: IrValue, rhs: IrValue },
    Icmp { pred: Predicate, ty: IrType, lhs: IrValue, rhs: IrValue },
    Select { cond: Operand, on_true: Operand, on_false: Operand },
    Zext { value: Operand, to: IrType },
    Load { ty: IrType, ptr: IrValue },
    Store { value: Operand, ptr: IrValue },
    Gep { source: IrType, base: IrValue, indices: Vec<Operand> },
    Phi { ty: IrType, incoming: Vec<(IrValue, String)> },
    Call { ret: IrType, callee: String, args: Vec<Operand> },
    Br { target: String },
    CondBr { cond: IrValue, if_true: String, if_false: String },
    Ret { value: Option<Operand> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    pub result: Option<String>,
    pub kind: InstKind,
    pub loc: Loc,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match &self.kind {
            InstKind::Binary { op, .. } => match op {
                BinOp::Add => Opcode::Add,
                BinOp::Sub => Opcode::Sub,
                BinOp::Mul => Opcode::Mul,
                BinOp::Shl => Opcode::Shl,
                BinOp::And => Opcode::And,
                BinOp::Or => Opcode::Or,
                BinOp::Xor => Opcode::Xor,
            },
            InstKind::Icmp { .. } => Opcode::Icmp,
            InstKind::Select { .. } => Opcode::Select,
            InstKind::Zext { .. } => Opcode::Zext,
            InstKind::Load { .. } => Opcode::Load,
            InstKind::Store { .. } => Opcode::Store,
            InstKind::Gep { .. } => Opcode::GetElementPtr,
            InstKind::Phi { .. } => Opcode::Phi,
            InstKind::Call { .. } => Opcode::Call,
            InstKind::Br { .. } | InstKind::CondBr { .. } => Opcode::Br,
            InstKind::Ret { .. } => Opcode::Ret,
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self.kind, InstKind::Br { .. } | InstKind::CondBr { .. } | InstKind::Ret { .. })
    }

    pub fn predicate(&self) -> Option<Predicate> {
        match &self.kind {
            InstKind::Icmp { pred, .. } => Some(*pred),
            _ => None,
        }
    }

    /// Every value read by the instruction, in textual order.
    pub fn operands(&self) -> Vec<&IrValue> {
        match &self.kind {
            InstKind::Binary { lhs, rhs, .. } | InstKind::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Select { cond, on_true, on_false } => {
                vec![&cond.value, &on_true.value, &on_false.value]
            }
            InstKind::Zext { value, .. } => vec![&value.value],
            InstKind::Load { ptr, .. } => vec![ptr],
            InstKind::Store { value, ptr } => vec![&value.value, ptr],
            InstKind::Gep { base, indices, .. } => {
                let mut v = vec![base];
                v.extend(indices.iter().map(|o| &o.value));
                v
            }
            InstKind::Phi { incoming, .. } => incoming.iter().map(|(v, _)| v).collect(),
            InstKind::Call { args, .. } => args.iter().map(|o| &o.value).collect(),
            InstKind::Br { .. } => vec![],
            InstKind::CondBr { cond, .. } => vec![cond],
            InstKind::Ret { value } => value.iter().map(|o| &o.value).collect(),
        }
    }

    /// Labels this instruction refers to.
    pub fn label_refs(&self) -> Vec<&str> {
        match &self.kind {
            InstKind::Br { target } => vec![target],
            InstKind::CondBr { if_true, if_false, .. } => vec![if_true, if_false],
            InstKind::Phi { incoming, .. } => incoming.iter().map(|(_, l)| l.as_str()).collect(),
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: IrType,
    /// Byte count from a `dereferenceable(N)` attribute.
    pub dereferenceable: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    /// Instructions in order; the last one is the block's terminator.
    pub insts: Vec<Instruction>,
}

impl Block {
    pub fn terminator(&self) -> &Instruction {
        self.insts.last().expect("blocks are never empty")
    }

    pub fn successors(&self) -> Vec<&str> {
        match &self.terminator().kind {
            InstKind::Br { target } => vec![target],
            InstKind::CondBr { if_true, if_false, .. } => vec![if_true, if_false],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub ret: IrType,
    pub params: Vec<Param>,
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }
}

/// A constant string global, e.g. an annotation payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalString {
    pub name: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Module {
    pub functions: Vec<Function>,
    pub globals: Vec<GlobalString>,
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn global_string(&self, name: &str) -> Option<&str> {
        self.globals.iter().find(|g| g.name == name).map(|g| g.value.as_str())
    }
}
