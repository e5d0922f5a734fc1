use thiserror::Error;

use crate::atoms::Axis;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix-pencil step could not resolve frequencies along one axis.
    #[error("unresolvable pencil along the {axis} axis: {reason}")]
    Unresolvable { axis: Axis, reason: String },

    /// The triple-pairing search exceeded its permutation budget.
    #[error("pairing of {s_hat} components exceeds the exhaustive cap {cap}; enable greedy pairing")]
    PairingCap { s_hat: usize, cap: usize },

    /// The splitting solver ran out of iterations.
    #[error("solver stopped at the iteration limit ({iterations}) before reaching tolerance")]
    MaxIterations { iterations: usize },

    /// A decomposition or factorization failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
