//! Random well-formed IR programs over four scalar parameters: public
//! `%n`, `%z` and private `%x`, `%y`.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

pub const HEADER: &str = "@.priv = private constant [8 x i8] c\"private\\00\"\n\
define i32 @f(i32 %n, i32 %z, i32 %x, i32 %y) {\n\
entry:\n  \
call void @llvm.var.annotation.p0.p0(ptr %x, ptr @.priv, ptr @.priv, i32 1, ptr null)\n  \
call void @llvm.var.annotation.p0.p0(ptr %y, ptr @.priv, ptr @.priv, i32 1, ptr null)\n";

#[derive(Clone)]
struct Val {
    name: String,
    private: bool,
}

pub struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    out: String,
    next: usize,
    avail: Vec<Val>,
    block: String,
    /// Arithmetic instructions emitted.
    pub arith: usize,
    /// Multiplications of two private values along any path.
    pub private_muls: usize,
}

impl<'r, R: Rng> Gen<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        let v = |n: &str, private| Val { name: format!("%{n}"), private };
        Gen {
            rng,
            out: HEADER.to_string(),
            next: 0,
            avail: vec![v("n", false), v("z", false), v("x", true), v("y", true)],
            block: "entry".into(),
            arith: 0,
            private_muls: 0,
        }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    fn operand(&mut self, from: &[Val]) -> Val {
        if self.rng.gen_bool(0.2) {
            Val { name: self.rng.gen_range(0..100u32).to_string(), private: false }
        } else {
            from.choose(self.rng).unwrap().clone()
        }
    }

    /// One `add`/`sub`/`mul` over values in `from`; returns the result.
    fn arith_over(&mut self, from: &[Val]) -> Val {
        let (a, b) = (self.operand(from), self.operand(from));
        let op = ["add", "sub", "mul"].choose(self.rng).unwrap();
        if *op == "mul" && a.private && b.private {
            self.private_muls += 1;
        }
        let name = format!("%{}", self.fresh("v"));
        writeln!(self.out, "  {name} = {op} i32 {}, {}", a.name, b.name).unwrap();
        self.arith += 1;
        Val { name, private: a.private || b.private }
    }

    pub fn arith(&mut self) {
        let avail = self.avail.clone();
        let v = self.arith_over(&avail);
        self.avail.push(v);
    }

    fn public(&mut self) -> Val {
        let pubs: Vec<Val> = self.avail.iter().filter(|v| !v.private).cloned().collect();
        pubs.choose(self.rng).unwrap().clone()
    }

    fn label(&mut self, name: &str) {
        writeln!(self.out, "{name}:").unwrap();
        self.block = name.to_string();
    }

    pub fn diamond(&mut self) {
        let (t, f, j) = (self.fresh("then"), self.fresh("else"), self.fresh("join"));
        let c = self.public();
        let cond = format!("%{}", self.fresh("c"));
        let pred = ["slt", "sgt", "eq", "ne", "sle", "sge"].choose(self.rng).unwrap();
        let k = self.rng.gen_range(0..8);
        writeln!(self.out, "  {cond} = icmp {pred} i32 {}, {k}\n  br i1 {cond}, label %{t}, label %{f}", c.name).unwrap();
        let avail = self.avail.clone();
        let arm = |g: &mut Self, label: &str| {
            g.label(label);
            let mut local = avail.clone();
            for _ in 0..g.rng.gen_range(1..3) {
                let v = g.arith_over(&local);
                local.push(v);
            }
            writeln!(g.out, "  br label %{j}").unwrap();
            local.pop().unwrap()
        };
        let (a, b) = (arm(self, &t), arm(self, &f));
        self.label(&j);
        let name = format!("%{}", self.fresh("phi"));
        writeln!(self.out, "  {name} = phi i32 [ {}, %{t} ], [ {}, %{f} ]", a.name, b.name).unwrap();
        self.avail.push(Val { name, private: a.private || b.private });
    }

    /// A counted loop of 0..4 iterations folding an accumulator.
    pub fn counted_loop(&mut self) {
        let (h, b, e) = (self.fresh("head"), self.fresh("body"), self.fresh("exit"));
        let (i, i2, acc, acc2) = (self.fresh("%i"), self.fresh("%inext"), self.fresh("%acc"), self.fresh("%acc"));
        let init = self.avail.choose(self.rng).unwrap().clone();
        let pred = self.block.clone();
        let trips = self.rng.gen_range(0..4);
        writeln!(self.out, "  br label %{h}").unwrap();
        self.label(&h);
        let c = self.fresh("%c");
        writeln!(
            self.out,
            "  {i} = phi i32 [ 0, %{pred} ], [ {i2}, %{b} ]\n  {acc} = phi i32 [ {}, %{pred} ], [ {acc2}, %{b} ]\n  {c} = icmp slt i32 {i}, {trips}\n  br i1 {c}, label %{b}, label %{e}",
            init.name
        )
        .unwrap();
        self.label(&b);
        let other = self.avail.choose(self.rng).unwrap().clone();
        let op = ["add", "sub", "mul"].choose(self.rng).unwrap();
        let private = init.private || other.private;
        if *op == "mul" && private && other.private {
            self.private_muls += trips;
        }
        writeln!(self.out, "  {acc2} = {op} i32 {acc}, {}\n  {i2} = add i32 {i}, 1\n  br label %{h}", other.name).unwrap();
        self.arith += 2;
        self.label(&e);
        self.avail.push(Val { name: acc, private });
    }

    pub fn finish(mut self) -> String {
        let last = self.avail.last().unwrap().name.clone();
        writeln!(self.out, "  ret i32 {last}\n}}\n\ndeclare void @llvm.var.annotation.p0.p0(ptr, ptr, ptr, i32, ptr)").unwrap();
        self.out
    }
}

/// `k` arithmetic instructions in one block.
pub fn straight_line<R: Rng>(rng: &mut R, k: usize) -> (String, usize) {
    let mut g = Gen::new(rng);
    for _ in 0..k {
        g.arith();
    }
    let n = g.arith;
    (g.finish(), n)
}

/// A random mix of arithmetic, diamonds on public conditions and counted
/// loops.
pub fn branchy<R: Rng>(rng: &mut R, segments: usize) -> String {
    let mut g = Gen::new(rng);
    g.arith();
    for _ in 0..segments {
        match g.rng.gen_range(0..3) {
            0 => g.arith(),
            1 => g.diamond(),
            _ => g.counted_loop(),
        }
    }
    g.finish()
}
