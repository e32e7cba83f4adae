//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmcsError {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A loss difference exceeded the bound that was supplied for it.
    /// This signals a wrong bound computation upstream, not bad data.
    #[error("bound violation at t={t}, pair ({i},{j}): |d|={d} exceeds c/2={half_c}")]
    BoundViolation {
        t: u64,
        i: usize,
        j: usize,
        d: f64,
        half_c: f64,
    },

    /// The panel or pair state is not in a shape that permits the operation.
    #[error("state error: {0}")]
    State(String),

    /// Input data could not be parsed or failed validation.
    #[error("ingestion error at line {line}: {msg}")]
    Ingest { line: usize, msg: String },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SmcsError>;
