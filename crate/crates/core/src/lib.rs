//! Compile-and-execute pipeline for the SPDZ online phase.

pub mod field;
pub mod ir;

pub use field::{Fp, P};
pub mod graph;
pub mod net;
pub mod spdz;
pub mod backend;
pub mod linear;
pub mod sched;
pub mod value;
pub mod demand;
pub mod oracle;
pub mod io;
pub mod report;
pub mod runtime;
pub mod compile;

pub use compile::{compile, CompileError};
pub mod pipeline;
