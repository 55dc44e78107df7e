//! IR text to circuit graph in one call.

use crate::graph::{build_graph, BuildError, BuildOptions, CircuitGraph};
use crate::ir::{parse_module, validate_entry, Diagnostic, ValidateError};

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Parse(Vec<Diagnostic>),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// Parses, validates and lowers `entry` (or the only function).
pub fn compile(text: &str, entry: Option<&str>, opts: &BuildOptions) -> Result<CircuitGraph, CompileError> {
    let module = parse_module(text).map_err(CompileError::Parse)?;
    let view = validate_entry(&module, entry)?;
    Ok(build_graph(&view, opts)?)
}
