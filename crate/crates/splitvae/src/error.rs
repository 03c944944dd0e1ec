//! Crate-wide error type.

use thiserror::Error;

use crate::transport::{Phase, RankId};

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix expected to be positive semidefinite has a significantly
    /// negative eigenvalue.
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    /// A statistic needs more rows than were provided.
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// A backward pass or phase method was called before its matching
    /// forward counterpart.
    #[error("protocol order violation: {0}")]
    ProtocolOrder(String),

    /// A collective timed out waiting for participants.
    #[error("collective timeout in phase {phase}: missing rank(s) {missing:?}")]
    CollectiveTimeout { phase: Phase, missing: Vec<RankId> },

    /// Transport misuse: duplicate contributions, wrong part counts, a
    /// poisoned bus.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Invalid run configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// Operation requires state that has not been established (e.g.
    /// generating from an untrained model).
    #[error("invalid state: {0}")]
    State(String),

    /// Malformed input file.
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    /// Bad data values (non-finite entries, out-of-range targets).
    #[error("data error: {0}")]
    Data(String),

    /// Numeric breakdown at runtime (divergence, failed factorization).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
