//! Entry-point validation: picks the MPC entry function and reads the
//! privacy annotation of each parameter.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::model::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Privacy {
    Public,
    Private,
}

impl Privacy {
    pub fn is_private(self) -> bool {
        self == Privacy::Private
    }

    pub fn join(self, other: Privacy) -> Privacy {
        if self.is_private() || other.is_private() {
            Privacy::Private
        } else {
            Privacy::Public
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidateError {
    #[error("no function named @{0} in module")]
    NoSuchEntry(String),
    #[error("module defines {0} functions; pass the entry name explicitly")]
    AmbiguousEntry(usize),
    #[error("pointer parameter %{0} has no privacy annotation")]
    MissingAnnotation(String),
    #[error("parameter %{param} has unknown annotation \"{value}\"")]
    UnknownAnnotation { param: String, value: String },
    #[error("parameter %{0} is annotated more than once with conflicting tags")]
    ConflictingAnnotation(String),
    #[error("entry function returns unsupported type {0}")]
    BadReturnType(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub ty: IrType,
    pub privacy: Privacy,
    pub dereferenceable: Option<u64>,
}

/// A module together with its validated entry function.
#[derive(Clone, Debug)]
pub struct EntryView<'m> {
    pub module: &'m Module,
    pub function: &'m Function,
    pub params: Vec<ParamInfo>,
}

fn annotation_target(inst: &Instruction) -> Option<(&str, &IrValue)> {
    match &inst.kind {
        InstKind::Call { callee, args, .. } if callee.starts_with("llvm.var.annotation") && args.len() >= 2 => {
            match &args[0].value {
                IrValue::Local(n) => Some((n.as_str(), &args[1].value)),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Validates the entry function. With `entry == None` the module must
/// contain exactly one function.
pub fn validate_entry<'m>(module: &'m Module, entry: Option<&str>) -> Result<EntryView<'m>, ValidateError> {
    let function = match entry {
        Some(name) => module.function(name).ok_or_else(|| ValidateError::NoSuchEntry(name.to_string()))?,
        None => match module.functions.as_slice() {
            [f] => f,
            fs => return Err(ValidateError::AmbiguousEntry(fs.len())),
        },
    };
    match &function.ret {
        IrType::Int(32) | IrType::Int(1) | IrType::Vector { .. } | IrType::Ptr | IrType::Void => {}
        other => return Err(ValidateError::BadReturnType(other.to_string())),
    }

    let mut tags: HashMap<&str, Privacy> = HashMap::new();
    for inst in function.blocks.iter().flat_map(|b| &b.insts) {
        let Some((param, payload)) = annotation_target(inst) else { continue };
        if !function.params.iter().any(|p| p.name == param) {
            continue;
        }
        let text = match payload {
            IrValue::Global(g) => module.global_string(g).unwrap_or_default(),
            _ => "",
        };
        let privacy = match text {
            "private" => Privacy::Private,
            "public" => Privacy::Public,
            other => {
                return Err(ValidateError::UnknownAnnotation { param: param.to_string(), value: other.to_string() })
            }
        };
        if let Some(prev) = tags.insert(param, privacy) {
            if prev != privacy {
                return Err(ValidateError::ConflictingAnnotation(param.to_string()));
            }
        }
    }

    let mut params = Vec::with_capacity(function.params.len());
    for p in &function.params {
        let privacy = match (tags.get(p.name.as_str()), &p.ty) {
            (Some(t), _) => *t,
            (None, IrType::Ptr) => return Err(ValidateError::MissingAnnotation(p.name.clone())),
            (None, _) => Privacy::Public,
        };
        params.push(ParamInfo { name: p.name.clone(), ty: p.ty.clone(), privacy, dereferenceable: p.dereferenceable });
    }
    Ok(EntryView { module, function, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    const FIG: &str = r#"@.priv = private constant [8 x i8] c"private\00"
@.pub = private constant [7 x i8] c"public\00"
define ptr @linear_layer(ptr %x, ptr %W, ptr %b) {
entry:
  call void @llvm.var.annotation.p0.p0(ptr %x, ptr @.priv, ptr @.priv, i32 1, ptr null)
  call void @llvm.var.annotation.p0.p0(ptr %W, ptr @.priv, ptr @.priv, i32 2, ptr null)
  call void @llvm.var.annotation.p0.p0(ptr %b, ptr @.pub, ptr @.priv, i32 3, ptr null)
  %out = call ptr @mark_linear_layer(ptr %x, ptr %W, ptr %b, i32 4, i32 2)
  ret ptr %out
}
"#;

    #[test]
    fn tags_three_params() {
        let m = parse_module(FIG).unwrap();
        let v = validate_entry(&m, Some("linear_layer")).unwrap();
        let tags: Vec<Privacy> = v.params.iter().map(|p| p.privacy).collect();
        assert_eq!(tags, vec![Privacy::Private, Privacy::Private, Privacy::Public]);
    }

    #[test]
    fn missing_annotation() {
        let text = FIG.replace("  call void @llvm.var.annotation.p0.p0(ptr %b, ptr @.pub, ptr @.priv, i32 3, ptr null)\n", "");
        let m = parse_module(&text).unwrap();
        assert_eq!(validate_entry(&m, None).unwrap_err(), ValidateError::MissingAnnotation("b".into()));
    }

    #[test]
    fn no_such_entry() {
        let m = parse_module(FIG).unwrap();
        assert_eq!(validate_entry(&m, Some("main")).unwrap_err(), ValidateError::NoSuchEntry("main".into()));
    }
}
