//! Front end for the accepted textual SSA-IR subset.

mod lexer;
mod model;
mod parse;
mod print;
mod validate;

pub use model::*;
pub use parse::{parse_module, Diagnostic, DiagnosticKind};
pub use validate::{validate_entry, EntryView, ParamInfo, Privacy, ValidateError};
