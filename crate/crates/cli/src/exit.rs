//! Exit codes. 1 is anything unexpected (I/O and the like), 2 bad input,
//! 3 a reference that does not resolve, 4 a failing hook or encoder.

use compcomp_core::curator::CuratorError;
use compcomp_core::encoder::EncodeError;
use compcomp_core::eval::EvalError;
use compcomp_core::hooks::HookError;
use compcomp_core::qagen::QaGenError;
use compcomp_core::report::ReportError;
use compcomp_core::store::StoreError;

pub const GENERIC: u8 = 1;
pub const VALIDATION: u8 = 2;
pub const UNRESOLVED: u8 = 3;
pub const HOOK: u8 = 4;

/// Marks an error raised by the CLI itself with an explicit code.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct Coded {
    pub code: u8,
    pub message: String,
}

pub fn coded(code: u8, message: impl Into<String>) -> anyhow::Error {
    Coded {
        code,
        message: message.into(),
    }
    .into()
}

fn store_code(e: &StoreError) -> u8 {
    match e {
        StoreError::Io { .. } => GENERIC,
        StoreError::UnknownId(_) => UNRESOLVED,
        _ => VALIDATION,
    }
}

fn curator_code(e: &CuratorError) -> u8 {
    match e {
        CuratorError::Hook(_) | CuratorError::Encode(_) | CuratorError::Embedding { .. } => HOOK,
        CuratorError::Store(s) => store_code(s),
        _ => VALIDATION,
    }
}

/// The first recognised error in the chain decides.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code;
        }
        if let Some(e) = cause.downcast_ref::<CuratorError>() {
            return curator_code(e);
        }
        if let Some(e) = cause.downcast_ref::<StoreError>() {
            return store_code(e);
        }
        if cause.is::<HookError>() || cause.is::<EncodeError>() {
            return HOOK;
        }
        if let Some(e) = cause.downcast_ref::<QaGenError>() {
            return match e {
                QaGenError::UnknownEntity(_) => UNRESOLVED,
                _ => VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::UnknownQids(_) => UNRESOLVED,
                _ => VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<ReportError>() {
            return match e {
                ReportError::UnknownMember { .. } => UNRESOLVED,
                _ => VALIDATION,
            };
        }
        if cause.is::<serde_json::Error>() {
            return VALIDATION;
        }
    }
    GENERIC
}
