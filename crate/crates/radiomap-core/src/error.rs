//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An index is outside the grid or tensor it addresses.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Tensor or field shapes do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A sampler was asked for more cells than are available.
    #[error("insufficient capacity: {0}")]
    Capacity(String),

    /// An operation contract was violated (duplicate cells, non-scalar
    /// loss, nonpositive variance, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model fit failed to converge or the data is degenerate.
    #[error("fit failed: {0}")]
    Fit(String),

    /// A linear system is singular even after jitter.
    #[error("singular system: {0}")]
    Singular(String),

    /// Mismatched run-time configuration (grid vs. checkpoint, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical failure (NaN loss, non-finite value) aborted a run.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// On-disk data is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// A metric is undefined for the given inputs (e.g. empty mask).
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
