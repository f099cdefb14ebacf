//! Crate-wide error type.

use crate::trace::SolveTrace;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters at construction time (bad penalty parameters,
    /// malformed config, out-of-range step sizes, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector/matrix shapes do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Smoothing parameter outside (0, 1/rho).
    #[error("invalid smoothing parameter mu={mu}: must lie in (0, {limit}) for rho={rho}")]
    InvalidSmoothing { mu: f64, rho: f64, limit: f64 },

    /// An iterative numeric routine failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Operation requires structure the operator does not have
    /// (e.g. a least-norm correction on a non-surjective operator).
    #[error("unsupported operator: {0}")]
    Unsupported(String),

    /// API misuse (mismatched envelopes, non-finite inputs, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A solver produced a non-finite iterate. The partial trace is kept
    /// so the run can be inspected.
    #[error("iterates diverged (non-finite values) at iteration {iteration}")]
    Divergence {
        iteration: usize,
        trace: Box<SolveTrace>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
