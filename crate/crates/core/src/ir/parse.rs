//! Recursive-descent parser for the accepted IR fragment.
//!
//! The grammar is line oriented: one top-level entity or instruction per
//! line, with function bodies delimited by `define ... {` and `}`. Comment
//! lines, metadata, attribute groups and declarations are skipped.

use std::collections::HashSet;
use std::fmt;

use super::lexer::{tokenize, Tok, Token};
use super::model::*;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    UnsupportedOpcode(String),
    MalformedType(String),
    DuplicateSsaName(String),
    UnterminatedBlock(String),
    UndefinedLabel(String),
    ConstantTooWide(String),
    Syntax(String),
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticKind::UnsupportedOpcode(op) => write!(f, "unsupported opcode '{op}'"),
            DiagnosticKind::MalformedType(t) => write!(f, "malformed or unsupported type: {t}"),
            DiagnosticKind::DuplicateSsaName(n) => write!(f, "SSA name %{n} is defined more than once"),
            DiagnosticKind::UnterminatedBlock(b) => write!(f, "block '{b}' does not end in a terminator"),
            DiagnosticKind::UndefinedLabel(l) => write!(f, "reference to undefined label %{l}"),
            DiagnosticKind::ConstantTooWide(c) => write!(f, "integer constant {c} does not fit in 32 bits"),
            DiagnosticKind::Syntax(m) => write!(f, "{m}"),
        }
    }
}

/// A parse diagnostic with a 1-based source position.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {kind}")]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub kind: DiagnosticKind,
}

type PResult<T> = Result<T, (u32, DiagnosticKind)>;

fn syntax<T>(col: u32, msg: impl Into<String>) -> PResult<T> {
    Err((col, DiagnosticKind::Syntax(msg.into())))
}

const I32_MIN: i128 = i32::MIN as i128;
const U32_MAX: i128 = u32::MAX as i128;

/// Parses IR text into a [`Module`], or returns every diagnostic found.
pub fn parse_module(text: &str) -> Result<Module, Vec<Diagnostic>> {
    let mut p = ModuleParser::default();
    for (idx, line) in text.lines().enumerate() {
        p.line(idx as u32 + 1, line);
    }
    p.finish()
}

#[derive(Default)]
struct ModuleParser {
    module: Module,
    diags: Vec<Diagnostic>,
    func: Option<FnState>,
}

struct FnState {
    func: Function,
    start_line: u32,
    /// Set once the current block has its terminator.
    terminated: bool,
    names: HashSet<String>,
    label_refs: Vec<(String, Loc)>,
}

impl ModuleParser {
    fn diag(&mut self, line: u32, col: u32, kind: DiagnosticKind) {
        self.diags.push(Diagnostic { line, col, kind });
    }

    fn line(&mut self, lineno: u32, line: &str) {
        let toks = match tokenize(line) {
            Ok(t) => t,
            Err((col, msg)) => {
                self.diag(lineno, col, DiagnosticKind::Syntax(msg));
                return;
            }
        };
        if toks.is_empty() {
            return;
        }
        if self.func.is_some() {
            self.body_line(lineno, toks);
        } else {
            self.top_line(lineno, toks);
        }
    }

    fn top_line(&mut self, lineno: u32, toks: Vec<Token>) {
        match &toks[0].tok {
            Tok::Word(w) if w == "define" => match parse_define(&toks) {
                Ok(func) => {
                    let names = func.params.iter().map(|p| p.name.clone()).collect();
                    self.func = Some(FnState {
                        func,
                        start_line: lineno,
                        terminated: true,
                        names,
                        label_refs: Vec::new(),
                    });
                }
                Err((col, kind)) => self.diag(lineno, col, kind),
            },
            Tok::Global(name) => {
                if let Some(bytes) = toks.iter().find_map(|t| match &t.tok {
                    Tok::CStr(b) => Some(b.clone()),
                    _ => None,
                }) {
                    let end = bytes.iter().position(|&b| b == 0).unwrap_or(bytes.len());
                    self.module.globals.push(GlobalString {
                        name: name.clone(),
                        value: String::from_utf8_lossy(&bytes[..end]).into_owned(),
                    });
                }
            }
            // source_filename, target, attributes, declare, metadata, comdats
            _ => {}
        }
    }

    fn body_line(&mut self, lineno: u32, toks: Vec<Token>) {
        if toks.len() == 1 && toks[0].tok == Tok::Punct('}') {
            self.end_function(lineno);
            return;
        }
        // block label `name:`
        if toks.len() >= 2 && toks[1].tok == Tok::Punct(':') {
            let label = match &toks[0].tok {
                Tok::Word(w) => w.clone(),
                Tok::Int(v) => v.to_string(),
                Tok::Str(s) => s.clone(),
                _ => {
                    self.diag(lineno, toks[0].col, DiagnosticKind::Syntax("bad block label".into()));
                    return;
                }
            };
            self.start_block(lineno, label);
            return;
        }
        let loc = Loc { line: lineno, col: toks[0].col };
        let inst = match parse_instruction(&toks, loc) {
            Ok(Some(i)) => i,
            Ok(None) => return,
            Err((col, kind)) => {
                self.diag(lineno, col, kind);
                return;
            }
        };
        let st = self.func.as_mut().unwrap();
        if st.func.blocks.is_empty() {
            // implicit entry block takes the next unnamed number
            let numbered = st.func.params.iter().filter(|p| p.name.chars().all(|c| c.is_ascii_digit())).count();
            st.func.blocks.push(Block { label: numbered.to_string(), insts: Vec::new() });
            st.terminated = false;
        } else if st.terminated {
            self.diag(lineno, loc.col, DiagnosticKind::Syntax("instruction follows the block terminator".into()));
            return;
        }
        let st = self.func.as_mut().unwrap();
        if let Some(name) = &inst.result {
            if !st.names.insert(name.clone()) {
                let name = name.clone();
                self.diag(lineno, loc.col, DiagnosticKind::DuplicateSsaName(name));
                return;
            }
        }
        for l in inst.label_refs() {
            st.label_refs.push((l.to_string(), loc));
        }
        st.terminated = inst.is_terminator();
        st.func.blocks.last_mut().unwrap().insts.push(inst);
    }

    fn start_block(&mut self, lineno: u32, label: String) {
        let st = self.func.as_mut().unwrap();
        if !st.terminated {
            let prev = st.func.blocks.last().map(|b| b.label.clone()).unwrap_or_default();
            self.diag(lineno, 1, DiagnosticKind::UnterminatedBlock(prev));
        }
        let st = self.func.as_mut().unwrap();
        if st.func.blocks.iter().any(|b| b.label == label) {
            self.diag(lineno, 1, DiagnosticKind::Syntax(format!("label '{label}' defined twice")));
            return;
        }
        st.func.blocks.push(Block { label, insts: Vec::new() });
        st.terminated = false;
    }

    fn end_function(&mut self, lineno: u32) {
        let st = self.func.take().unwrap();
        if !st.terminated {
            let label = st.func.blocks.last().map(|b| b.label.clone()).unwrap_or_default();
            self.diag(lineno, 1, DiagnosticKind::UnterminatedBlock(label));
        }
        if st.func.blocks.is_empty() {
            self.diag(st.start_line, 1, DiagnosticKind::Syntax(format!("function @{} has no body", st.func.name)));
        }
        let labels: HashSet<&str> = st.func.blocks.iter().map(|b| b.label.as_str()).collect();
        for (l, loc) in &st.label_refs {
            if !labels.contains(l.as_str()) {
                self.diags.push(Diagnostic { line: loc.line, col: loc.col, kind: DiagnosticKind::UndefinedLabel(l.clone()) });
            }
        }
        self.module.functions.push(st.func);
    }

    fn finish(mut self) -> Result<Module, Vec<Diagnostic>> {
        if let Some(st) = &self.func {
            let line = st.start_line;
            let name = st.func.name.clone();
            self.diag(line, 1, DiagnosticKind::Syntax(format!("function @{name} is missing its closing brace")));
        }
        if self.diags.is_empty() {
            Ok(self.module)
        } else {
            self.diags.sort_by_key(|d| (d.line, d.col));
            Err(self.diags)
        }
    }
}

/// Token cursor over one line.
struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(toks: &'a [Token]) -> Self {
        Cursor { toks, pos: 0 }
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, off: usize) -> Option<&'a Tok> {
        self.toks.get(self.pos + off).map(|t| &t.tok)
    }

    fn col(&self) -> u32 {
        self.toks
            .get(self.pos)
            .map(|t| t.col)
            .unwrap_or_else(|| self.toks.last().map(|t| t.col + 1).unwrap_or(1))
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.tok);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            syntax(self.col(), format!("expected '{c}'"))
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Word(x)) if x == w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            syntax(self.col(), format!("expected '{w}'"))
        }
    }

    fn eat_words(&mut self, set: &[&str]) {
        while let Some(Tok::Word(w)) = self.peek() {
            if set.contains(&w.as_str()) {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn local(&mut self) -> PResult<String> {
        match self.next() {
            Some(Tok::Local(n)) => Ok(n.clone()),
            _ => syntax(self.col(), "expected a local name"),
        }
    }

    fn label_ref(&mut self) -> PResult<String> {
        self.expect_word("label")?;
        self.local()
    }

    /// Skips a balanced parenthesised group if one starts here.
    fn skip_group(&mut self) {
        if self.peek() != Some(&Tok::Punct('(')) {
            return;
        }
        let mut depth = 0;
        while let Some(t) = self.next() {
            match t {
                Tok::Punct('(') => depth += 1,
                Tok::Punct(')') => {
                    depth -= 1;
                    if depth == 0 {
                        return;
                    }
                }
                _ => {}
            }
        }
    }

    /// Parses a trailing `, align N` and stops at metadata attachments.
    fn finish_line(&mut self) -> PResult<()> {
        while !self.at_end() {
            if self.eat_punct(',') {
                if self.eat_word("align") {
                    match self.next() {
                        Some(Tok::Int(_)) => continue,
                        _ => return syntax(self.col(), "expected alignment"),
                    }
                }
                if matches!(self.peek(), Some(Tok::Meta)) {
                    return Ok(());
                }
                return syntax(self.col(), "unexpected trailing operand");
            }
            match self.peek() {
                Some(Tok::AttrRef) | Some(Tok::Meta) => {
                    self.pos += 1;
                }
                _ => return syntax(self.col(), "unexpected trailing tokens"),
            }
        }
        Ok(())
    }

    fn ty(&mut self) -> PResult<IrType> {
        let col = self.col();
        let base = match self.next() {
            Some(Tok::Word(w)) => match w.as_str() {
                "ptr" => IrType::Ptr,
                "void" => IrType::Void,
                "label" => IrType::Label,
                w if w.starts_with('i') && w.len() > 1 && w[1..].chars().all(|c| c.is_ascii_digit()) => {
                    let bits: u32 = w[1..].parse().map_err(|_| (col, DiagnosticKind::MalformedType(w.to_string())))?;
                    IrType::Int(bits)
                }
                other => return Err((col, DiagnosticKind::MalformedType(other.to_string()))),
            },
            Some(Tok::Punct('<')) => {
                let lanes = match self.next() {
                    Some(Tok::Int(n)) if *n >= 1 && *n <= u32::MAX as i128 => *n as u32,
                    _ => return Err((col, DiagnosticKind::MalformedType("vector lane count".into()))),
                };
                self.expect_word("x").map_err(|_| (col, DiagnosticKind::MalformedType("vector type".into())))?;
                let elem = self.ty()?;
                if !self.eat_punct('>') {
                    return Err((col, DiagnosticKind::MalformedType("unterminated vector type".into())));
                }
                match elem {
                    IrType::Int(bits) => IrType::Vector { lanes, bits },
                    other => return Err((col, DiagnosticKind::MalformedType(format!("vector of {other}")))),
                }
            }
            Some(Tok::Punct('[')) => {
                let len = match self.next() {
                    Some(Tok::Int(n)) if *n >= 0 => *n as u64,
                    _ => return Err((col, DiagnosticKind::MalformedType("array length".into()))),
                };
                self.expect_word("x").map_err(|_| (col, DiagnosticKind::MalformedType("array type".into())))?;
                let elem = self.ty()?;
                if !self.eat_punct(']') {
                    return Err((col, DiagnosticKind::MalformedType("unterminated array type".into())));
                }
                IrType::Array { len, elem: Box::new(elem) }
            }
            Some(t) => return Err((col, DiagnosticKind::MalformedType(format!("{t:?}")))),
            None => return Err((col, DiagnosticKind::MalformedType("missing type".into()))),
        };
        // typed pointers such as `i32*` are treated as opaque pointers
        if self.eat_punct('*') {
            while self.eat_punct('*') {}
            return Ok(IrType::Ptr);
        }
        Ok(base)
    }

    /// A type that may carry values in an instruction.
    fn value_ty(&mut self) -> PResult<IrType> {
        let col = self.col();
        let t = self.ty()?;
        check_value_type(&t).map_err(|k| (col, k))?;
        Ok(t)
    }

    fn int_const(&self, v: i128, col: u32) -> PResult<i64> {
        if (I32_MIN..=U32_MAX).contains(&v) {
            Ok(v as i64)
        } else {
            Err((col, DiagnosticKind::ConstantTooWide(v.to_string())))
        }
    }

    fn value(&mut self, ty: &IrType) -> PResult<IrValue> {
        let col = self.col();
        match self.next() {
            Some(Tok::Local(n)) => Ok(IrValue::Local(n.clone())),
            Some(Tok::Global(n)) => Ok(IrValue::Global(n.clone())),
            Some(Tok::Int(v)) => Ok(IrValue::Int(self.int_const(*v, col)?)),
            Some(Tok::Word(w)) => match w.as_str() {
                "true" => Ok(IrValue::Int(1)),
                "false" => Ok(IrValue::Int(0)),
                "null" => Ok(IrValue::Null),
                "zeroinitializer" => Ok(IrValue::ZeroInit),
                "splat" => {
                    self.expect_punct('(')?;
                    let elem_ty = self.value_ty()?;
                    let v = match self.value(&elem_ty)? {
                        IrValue::Int(v) => v,
                        _ => return syntax(col, "splat of a non-constant"),
                    };
                    self.expect_punct(')')?;
                    Ok(IrValue::Vector(vec![v; ty.lanes() as usize]))
                }
                "getelementptr" => {
                    // constant expression; only the referenced global matters
                    self.eat_words(&["inbounds", "nuw", "nusw"]);
                    let start = self.pos;
                    self.skip_group();
                    let global = self.toks[start..self.pos].iter().find_map(|t| match &t.tok {
                        Tok::Global(g) => Some(g.clone()),
                        _ => None,
                    });
                    match global {
                        Some(g) => Ok(IrValue::Global(g)),
                        None => syntax(col, "constant expression without a global"),
                    }
                }
                "undef" | "poison" => syntax(col, format!("'{w}' values are not supported")),
                other => syntax(col, format!("unexpected '{other}' where a value was expected")),
            },
            Some(Tok::Punct('<')) => {
                let mut vals = Vec::new();
                loop {
                    let ecol = self.col();
                    let et = self.value_ty()?;
                    match self.value(&et)? {
                        IrValue::Int(v) => vals.push(v),
                        _ => return syntax(ecol, "vector constants must be integer literals"),
                    }
                    if self.eat_punct('>') {
                        break;
                    }
                    self.expect_punct(',')?;
                }
                Ok(IrValue::Vector(vals))
            }
            _ => syntax(col, "expected a value"),
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        let ty = self.value_ty()?;
        let value = self.value(&ty)?;
        Ok(Operand { ty, value })
    }

    /// Call argument or parameter: type, attributes, then a value.
    fn call_arg(&mut self) -> PResult<Operand> {
        let ty = self.value_ty()?;
        self.skip_param_attrs();
        let value = self.value(&ty)?;
        Ok(Operand { ty, value })
    }

    /// Skips parameter attributes; returns the `dereferenceable(N)` byte count.
    fn skip_param_attrs(&mut self) -> Option<u64> {
        let mut deref = None;
        loop {
            match self.peek() {
                Some(Tok::Word(w)) if !is_value_word(w) => {
                    let w = w.clone();
                    self.pos += 1;
                    if w == "align" {
                        if let Some(Tok::Int(_)) = self.peek() {
                            self.pos += 1;
                        }
                    } else if self.peek() == Some(&Tok::Punct('(')) {
                        if w == "dereferenceable" {
                            if let Some(Tok::Int(n)) = self.peek_at(1) {
                                deref = Some(*n as u64);
                            }
                        }
                        self.skip_group();
                    }
                }
                _ => return deref,
            }
        }
    }
}

fn is_value_word(w: &str) -> bool {
    matches!(w, "true" | "false" | "null" | "zeroinitializer" | "undef" | "poison" | "getelementptr" | "splat")
}

/// Widths accepted for value-carrying types.
fn check_value_type(t: &IrType) -> Result<(), DiagnosticKind> {
    match t {
        IrType::Int(1) | IrType::Int(32) | IrType::Int(64) | IrType::Ptr => Ok(()),
        IrType::Vector { lanes, bits: 32 } if *lanes >= 2 => Ok(()),
        IrType::Vector { lanes, bits } if *lanes < 2 => Err(DiagnosticKind::MalformedType(format!("<{lanes} x i{bits}>"))),
        other => Err(DiagnosticKind::MalformedType(other.to_string())),
    }
}

fn parse_define(toks: &[Token]) -> PResult<Function> {
    let gpos = toks
        .iter()
        .position(|t| matches!(t.tok, Tok::Global(_)))
        .ok_or((toks[0].col, DiagnosticKind::Syntax("function definition without a name".into())))?;
    let name = match &toks[gpos].tok {
        Tok::Global(n) => n.clone(),
        _ => unreachable!(),
    };
    // the return type is the longest type ending right before the name
    let mut ret = None;
    for start in 1..gpos {
        let mut c = Cursor::new(&toks[..gpos]);
        c.pos = start;
        if let Ok(t) = c.ty() {
            if c.at_end() {
                ret = Some(t);
                break;
            }
        }
    }
    let ret = ret.ok_or((toks[0].col, DiagnosticKind::MalformedType("function return type".into())))?;
    if !matches!(ret, IrType::Void) {
        check_value_type(&ret).map_err(|k| (toks[0].col, k))?;
    }
    let mut c = Cursor::new(toks);
    c.pos = gpos + 1;
    c.expect_punct('(')?;
    let mut params = Vec::new();
    let mut unnamed = 0;
    if !c.eat_punct(')') {
        loop {
            if c.peek() == Some(&Tok::Ellipsis) {
                return syntax(c.col(), "variadic functions are not supported");
            }
            let ty = c.value_ty()?;
            let dereferenceable = c.skip_param_attrs();
            let name = match c.peek() {
                Some(Tok::Local(n)) => {
                    let n = n.clone();
                    c.pos += 1;
                    n
                }
                _ => {
                    let n = unnamed.to_string();
                    unnamed += 1;
                    n
                }
            };
            params.push(Param { name, ty, dereferenceable });
            if c.eat_punct(')') {
                break;
            }
            c.expect_punct(',')?;
        }
    }
    // function attributes up to the opening brace
    while let Some(t) = c.next() {
        if *t == Tok::Punct('{') {
            return Ok(Function { name, ret, params, blocks: Vec::new() });
        }
    }
    syntax(c.col(), "expected '{' to open the function body")
}

fn is_dropped_intrinsic(name: &str) -> bool {
    name.starts_with("llvm.dbg.") || name.starts_with("llvm.lifetime.")
}

fn is_accepted_callee(name: &str) -> bool {
    name == "mark_linear_layer"
        || name.starts_with("llvm.var.annotation")
        || name.starts_with("llvm.vector.reduce.add.")
        || name.starts_with("llvm.vector.reduce.mul.")
}

/// Parses one instruction line. `Ok(None)` means the line is tolerated
/// noise that has no semantic content (debug and lifetime intrinsics).
fn parse_instruction(toks: &[Token], loc: Loc) -> PResult<Option<Instruction>> {
    let mut c = Cursor::new(toks);
    let result = if let Some(Tok::Local(n)) = c.peek() {
        if c.peek_at(1) == Some(&Tok::Punct('=')) {
            c.pos += 2;
            Some(n.clone())
        } else {
            None
        }
    } else {
        None
    };
    let op_col = c.col();
    let opcode = match c.next() {
        Some(Tok::Word(w)) => w.clone(),
        _ => return syntax(op_col, "expected an opcode"),
    };
    let needs_result = |r: &Option<String>| -> PResult<()> {
        if r.is_none() {
            syntax(op_col, format!("'{opcode}' must define a value"))
        } else {
            Ok(())
        }
    };
    let kind = match opcode.as_str() {
        "add" | "sub" | "mul" | "shl" | "and" | "or" | "xor" => {
            needs_result(&result)?;
            c.eat_words(&["nuw", "nsw", "disjoint", "exact"]);
            let op = match opcode.as_str() {
                "add" => BinOp::Add,
                "sub" => BinOp::Sub,
                "mul" => BinOp::Mul,
                "shl" => BinOp::Shl,
                "and" => BinOp::And,
                "or" => BinOp::Or,
                _ => BinOp::Xor,
            };
            let ty = c.value_ty()?;
            if ty == IrType::Ptr {
                return Err((op_col, DiagnosticKind::MalformedType("arithmetic on ptr".into())));
            }
            let lhs = c.value(&ty)?;
            c.expect_punct(',')?;
            let rhs = c.value(&ty)?;
            InstKind::Binary { op, ty, lhs, rhs }
        }
        "icmp" => {
            needs_result(&result)?;
            c.eat_words(&["samesign"]);
            let pcol = c.col();
            let pred = match c.next() {
                Some(Tok::Word(w)) => match Predicate::parse(w) {
                    Some(p) => p,
                    None => return Err((pcol, DiagnosticKind::UnsupportedOpcode(format!("icmp {w}")))),
                },
                _ => return syntax(pcol, "expected a comparison predicate"),
            };
            let ty = c.value_ty()?;
            let lhs = c.value(&ty)?;
            c.expect_punct(',')?;
            let rhs = c.value(&ty)?;
            InstKind::Icmp { pred, ty, lhs, rhs }
        }
        "select" => {
            needs_result(&result)?;
            let cond = c.operand()?;
            c.expect_punct(',')?;
            let on_true = c.operand()?;
            c.expect_punct(',')?;
            let on_false = c.operand()?;
            InstKind::Select { cond, on_true, on_false }
        }
        "zext" => {
            needs_result(&result)?;
            c.eat_words(&["nneg"]);
            let value = c.operand()?;
            c.expect_word("to")?;
            let to = c.value_ty()?;
            InstKind::Zext { value, to }
        }
        "load" => {
            needs_result(&result)?;
            if c.eat_word("volatile") || c.eat_word("atomic") {
                return syntax(op_col, "volatile and atomic loads are not supported");
            }
            let ty = c.value_ty()?;
            c.expect_punct(',')?;
            let pty = c.value_ty()?;
            if pty != IrType::Ptr {
                return Err((op_col, DiagnosticKind::MalformedType(format!("load from {pty}"))));
            }
            let ptr = c.value(&pty)?;
            InstKind::Load { ty, ptr }
        }
        "store" => {
            if c.eat_word("volatile") || c.eat_word("atomic") {
                return syntax(op_col, "volatile and atomic stores are not supported");
            }
            let value = c.operand()?;
            c.expect_punct(',')?;
            let pty = c.value_ty()?;
            let ptr = c.value(&pty)?;
            InstKind::Store { value, ptr }
        }
        "getelementptr" => {
            needs_result(&result)?;
            c.eat_words(&["inbounds", "nuw", "nusw"]);
            let source = c.ty()?;
            c.expect_punct(',')?;
            let pty = c.value_ty()?;
            let base = c.value(&pty)?;
            let mut indices = Vec::new();
            while c.peek() == Some(&Tok::Punct(',')) && !matches!(c.peek_at(1), Some(Tok::Meta)) {
                c.pos += 1;
                indices.push(c.operand()?);
            }
            InstKind::Gep { source, base, indices }
        }
        "phi" => {
            needs_result(&result)?;
            let ty = c.value_ty()?;
            let mut incoming = Vec::new();
            loop {
                c.expect_punct('[')?;
                let v = c.value(&ty)?;
                c.expect_punct(',')?;
                let l = c.local()?;
                c.expect_punct(']')?;
                incoming.push((v, l));
                if !(c.peek() == Some(&Tok::Punct(',')) && c.peek_at(1) == Some(&Tok::Punct('['))) {
                    break;
                }
                c.pos += 1;
            }
            InstKind::Phi { ty, incoming }
        }
        "call" | "tail" | "notail" | "musttail" => {
            if opcode != "call" {
                c.expect_word("call")?;
            }
            // return attributes and calling convention
            loop {
                match c.peek() {
                    Some(Tok::Word(w))
                        if !(w.starts_with('i') && w[1..].chars().all(|ch| ch.is_ascii_digit()) && w.len() > 1)
                            && w != "ptr"
                            && w != "void" =>
                    {
                        c.pos += 1;
                        c.skip_group();
                    }
                    _ => break,
                }
            }
            let ret = if matches!(c.peek(), Some(Tok::Word(w)) if w == "void") {
                c.pos += 1;
                IrType::Void
            } else {
                c.value_ty()?
            };
            // optional function type `(ptr, ...)`
            c.skip_group();
            let ccol = c.col();
            let callee = match c.next() {
                Some(Tok::Global(n)) => n.clone(),
                _ => return syntax(ccol, "only direct calls are supported"),
            };
            if is_dropped_intrinsic(&callee) {
                return Ok(None);
            }
            if !is_accepted_callee(&callee) {
                return Err((op_col, DiagnosticKind::UnsupportedOpcode(format!("call @{callee}"))));
            }
            c.expect_punct('(')?;
            let mut args = Vec::new();
            if !c.eat_punct(')') {
                loop {
                    args.push(c.call_arg()?);
                    if c.eat_punct(')') {
                        break;
                    }
                    c.expect_punct(',')?;
                }
            }
            InstKind::Call { ret, callee, args }
        }
        "br" => {
            if matches!(c.peek(), Some(Tok::Word(w)) if w == "label") {
                InstKind::Br { target: c.label_ref()? }
            } else {
                let cond = c.operand()?;
                if cond.ty != IrType::I1 {
                    return Err((op_col, DiagnosticKind::MalformedType(format!("branch condition of type {}", cond.ty))));
                }
                c.expect_punct(',')?;
                let if_true = c.label_ref()?;
                c.expect_punct(',')?;
                let if_false = c.label_ref()?;
                InstKind::CondBr { cond: cond.value, if_true, if_false }
            }
        }
        "ret" => {
            if c.eat_word("void") {
                InstKind::Ret { value: None }
            } else {
                InstKind::Ret { value: Some(c.operand()?) }
            }
        }
        other => return Err((op_col, DiagnosticKind::UnsupportedOpcode(other.to_string()))),
    };
    if !matches!(kind, InstKind::Call { .. }) && result.is_some() && matches!(kind, InstKind::Store { .. } | InstKind::Br { .. } | InstKind::CondBr { .. } | InstKind::Ret { .. }) {
        return syntax(op_col, format!("'{opcode}' does not define a value"));
    }
    c.finish_line()?;
    Ok(Some(Instruction { result, kind, loc }))
}
