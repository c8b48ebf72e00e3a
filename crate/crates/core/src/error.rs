use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("singular input: {0}")]
    Singular(String),

    #[error("columns leave the range of the metric: kernel component {residual:e} exceeds {tolerance:e}")]
    InconsistentRange { residual: f64, tolerance: f64 },

    #[error("blow-up at step {step}: particle {particle} reached speed {speed:e}")]
    BlowUp { step: u64, particle: usize, speed: f64 },

    #[error("degenerate projection: all velocities coincide with the mean")]
    DegenerateProjection,

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotPsd { .. } => "not_psd",
            Error::Singular(_) => "singular",
            Error::InconsistentRange { .. } => "inconsistent_range",
            Error::BlowUp { .. } => "blow_up",
            Error::DegenerateProjection => "degenerate_projection",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
