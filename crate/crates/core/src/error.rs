use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("exceptional point: |mu| = {mu_abs:e} below threshold {threshold:e}")]
    ExceptionalPoint { mu_abs: f64, threshold: f64 },

    #[error("operation requires {expected} system")]
    DriveRegime { expected: &'static str },

    #[error("synchronization condition vacuous for these parameters")]
    ConditionVacuous,

    #[error("time grid must be strictly increasing (index {index})")]
    NonIncreasingTimes { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no dominant mode: bright eigenvalues decay at the same rate")]
    NoDominantMode,

    #[error("dark modes decay slowest; long-time ratio depends on initial amplitudes")]
    DarkDominated,

    #[error("amplitude below singularity floor at mode {mode}")]
    AmplitudeFloor { mode: usize },

    #[error("numeric failure at step {step}: {what}")]
    NumericFailure { step: usize, what: String },

    #[error("empty input")]
    EmptyInput,

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
