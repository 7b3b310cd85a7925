use thiserror::Error;

/// Errors produced by the Krylov kernels, drivers and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `A - sI` could not be factored.
    #[error("singular shifted matrix A - sI at s = {shift}")]
    SingularShift { shift: f64 },

    /// A normalizer vanished while extending the basis.
    #[error("breakdown at step {step}: normalizer {norm:.3e} below tolerance")]
    Breakdown { step: usize, norm: f64 },

    /// The projected system `T - sigma I` is singular (sigma coincides with a Ritz value).
    #[error("reduced system singular at sigma = {sigma}")]
    RitzCoincident { sigma: f64 },

    /// The requested function is not defined on the spectrum of the argument.
    #[error("function domain violated: {0}")]
    Domain(String),

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: impl Into<String>, found: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        expected: expected.into(),
        found: found.into(),
    }
}
