use thiserror::Error;

/// Errors produced by the simulation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum QisError {
    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {actual_width}x{actual_height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        actual_width: usize,
        actual_height: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    /// Every frame fired; the zero-bit probability is 0 and the exposure is unbounded.
    #[error("saturated measurement: zero-bit probability {p} has no finite inverse")]
    Saturated { p: f64 },

    #[error("ADMM diverged at iteration {iteration}: |x| = {norm:.3e} exceeds {limit:.3e}")]
    Divergence {
        iteration: usize,
        norm: f64,
        limit: f64,
    },

    #[error("rank-deficient color samples: {0}")]
    RankDeficient(String),

    #[error("unknown denoiser '{0}'")]
    UnknownDenoiser(String),
}

pub type Result<T, E = QisError> = std::result::Result<T, E>;

pub(crate) fn check_dims(
    expected: (usize, usize),
    actual: (usize, usize),
) -> Result<()> {
    if expected != actual {
        return Err(QisError::DimensionMismatch {
            expected_width: expected.0,
            expected_height: expected.1,
            actual_width: actual.0,
            actual_height: actual.1,
        });
    }
    Ok(())
}
