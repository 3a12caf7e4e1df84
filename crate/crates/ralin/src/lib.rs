//! Conflict-free replicated data types, a deterministic replicated-execution
//! simulator, and checkers for replication-aware linearizability of recorded
//! histories against executable sequential specifications.

pub mod checker;
pub mod error;
pub mod model;
pub mod opcrdt;
pub mod runtime;
pub mod spec;
pub mod statecrdt;

pub use error::Error;
