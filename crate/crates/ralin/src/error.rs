//! Shared error type for the library.

use thiserror::Error;

/// Errors surfaced by the library. Checker rejections are *not* errors; they
/// are verdicts. Errors signal malformed inputs or scheduler contract breaches.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("precondition violated in {method}: {reason}")]
    PreconditionViolated { method: String, reason: String },
    #[error("broken causality: {0}")]
    BrokenCausality(String),
    #[error("causality violation: {0}")]
    CausalityViolation(String),
    #[error("unknown message {0}")]
    UnknownMessage(u64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing rewrite for query-update label {0}")]
    MissingRewrite(String),
    #[error("history not rewritten: query-update label {0} remains")]
    NotRewritten(String),
    #[error("bound exceeded: {0}")]
    BoundExceeded(String),
    #[error("unknown property {0}")]
    UnknownProp(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown replica r={0}")]
    UnknownReplica(u32),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
