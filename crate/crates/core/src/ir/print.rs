//! Canonical text form of a parsed module. The output re-parses to a
//! structurally identical [`Module`].

use std::fmt;

use super::model::*;

fn is_plain_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '$' | '.' | '_' | '-'))
        && !name.starts_with('-')
}

struct Name<'a>(char, &'a str);

impl fmt::Display for Name<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if is_plain_name(self.1) {
            write!(f, "{}{}", self.0, self.1)
        } else {
            write!(f, "{}\"{}\"", self.0, escape(self.1.as_bytes()))
        }
    }
}

fn escape(bytes: &[u8]) -> String {
    let mut s = String::new();
    for &b in bytes {
        if b == b'"' || b == b'\\' || !(0x20..0x7f).contains(&b) {
            s.push_str(&format!("\\{b:02X}"));
        } else {
            s.push(b as char);
        }
    }
    s
}

fn value(v: &IrValue) -> String {
    match v {
        IrValue::Local(n) => Name('%', n).to_string(),
        IrValue::Global(n) => Name('@', n).to_string(),
        other => other.to_string(),
    }
}

fn operand(o: &Operand) -> String {
    format!("{} {}", o.ty, value(&o.value))
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = &self.result {
            write!(f, "{} = ", Name('%', r))?;
        }
        match &self.kind {
            InstKind::Binary { op, ty, lhs, rhs } => {
                write!(f, "{} {ty} {}, {}", op.mnemonic(), value(lhs), value(rhs))
            }
            InstKind::Icmp { pred, ty, lhs, rhs } => {
                write!(f, "icmp {} {ty} {}, {}", pred.mnemonic(), value(lhs), value(rhs))
            }
            InstKind::Select { cond, on_true, on_false } => {
                write!(f, "select {}, {}, {}", operand(cond), operand(on_true), operand(on_false))
            }
            InstKind::Zext { value: v, to } => write!(f, "zext {} to {to}", operand(v)),
            InstKind::Load { ty, ptr } => write!(f, "load {ty}, ptr {}", value(ptr)),
            InstKind::Store { value: v, ptr } => write!(f, "store {}, ptr {}", operand(v), value(ptr)),
            InstKind::Gep { source, base, indices } => {
                write!(f, "getelementptr {source}, ptr {}", value(base))?;
                for i in indices {
                    write!(f, ", {}", operand(i))?;
                }
                Ok(())
            }
            InstKind::Phi { ty, incoming } => {
                write!(f, "phi {ty} ")?;
                for (i, (v, l)) in incoming.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "[ {}, {} ]", value(v), Name('%', l))?;
                }
                Ok(())
            }
            InstKind::Call { ret, callee, args } => {
                write!(f, "call {ret} {}(", Name('@', callee))?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", operand(a))?;
                }
                write!(f, ")")
            }
            InstKind::Br { target } => write!(f, "br label {}", Name('%', target)),
            InstKind::CondBr { cond, if_true, if_false } => write!(
                f,
                "br i1 {}, label {}, label {}",
                value(cond),
                Name('%', if_true),
                Name('%', if_false)
            ),
            InstKind::Ret { value: None } => write!(f, "ret void"),
            InstKind::Ret { value: Some(v) } => write!(f, "ret {}", operand(v)),
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "define {} {}(", self.ret, Name('@', &self.name))?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", p.ty)?;
            if let Some(n) = p.dereferenceable {
                write!(f, " dereferenceable({n})")?;
            }
            write!(f, " {}", Name('%', &p.name))?;
        }
        writeln!(f, ") {{")?;
        for b in &self.blocks {
            if is_plain_name(&b.label) {
                writeln!(f, "{}:", b.label)?;
            } else {
                writeln!(f, "\"{}\":", escape(b.label.as_bytes()))?;
            }
            for inst in &b.insts {
                writeln!(f, "  {inst}")?;
            }
        }
        writeln!(f, "}}")
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.globals {
            let len = g.value.len() + 1;
            let mut bytes = g.value.as_bytes().to_vec();
            bytes.push(0);
            writeln!(f, "{} = private constant [{len} x i8] c\"{}\"", Name('@', &g.name), escape(&bytes))?;
        }
        for func in &self.functions {
            writeln!(f)?;
            write!(f, "{func}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_module;

    #[test]
    fn round_trips_a_branchy_function() {
        let text = r#"@.s = private constant [7 x i8] c"public\00"
define i32 @f(i32 %n, ptr dereferenceable(8) %x) {
entry:
  call void @llvm.var.annotation.p0.p0(ptr %x, ptr @.s, ptr @.s, i32 1, ptr null)
  %c = icmp slt i32 %n, 3
  br i1 %c, label %a, label %b
a:
  %p = getelementptr inbounds i32, ptr %x, i64 1
  %v = load i32, ptr %p, align 4
  %w = select i1 %c, i32 %v, i32 7
  br label %b
b:
  %r = phi i32 [ %w, %a ], [ 0, %entry ]
  %s = shl i32 %r, 2
  %z = zext i1 %c to i32
  %t = add <2 x i32> <i32 1, i32 2>, zeroinitializer
  ret i32 %s
}
"#;
        let m = parse_module(text).unwrap();
        let printed = m.to_string();
        let again = parse_module(&printed).unwrap();
        assert_eq!(m, again);
        assert_eq!(printed, again.to_string());
    }
}
