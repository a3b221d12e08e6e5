use thiserror::Error;

/// Errors raised by measure, transport, simulation and optimization routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty measure")]
    EmptyMeasure,

    #[error("measure has zero total mass")]
    ZeroMass,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid split {split} for dimension {dim}")]
    BadSplit { split: usize, dim: usize },

    #[error("mass mismatch: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transport solver failed: {0}")]
    Solver(String),

    #[error("simulation failed at t={time}: {reason}")]
    Simulation { time: f64, reason: String },

    #[error("missing input for cost term `{0}`")]
    MissingInput(&'static str),

    #[error("optimizer produced no successful evaluation: {0}")]
    Optimizer(String),

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
