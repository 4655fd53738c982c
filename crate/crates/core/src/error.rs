use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Iterate or gradient left the finite range, or the iterate norm blew
    /// past the divergence threshold.
    #[error("diverged at iteration {iter}: {reason}")]
    Diverged { iter: usize, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inadmissible momentum: beta = {beta} must lie in ({lower}, 1]")]
    Inadmissible { beta: f64, lower: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("recorder failed at iteration {iter}: {message}")]
    Recorder { iter: usize, message: String },

    #[error("initial point outside the local ball: stacked distance {distance:e} > required radius {radius:e}")]
    OutsideBall { distance: f64, radius: f64 },

    #[error("dense Gram too large: dimension {dim} exceeds cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
