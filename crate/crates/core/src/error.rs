use std::fmt;

use thiserror::Error;

/// Direction of an integration pass, used to locate numerical failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Forward => f.write_str("forward"),
            Direction::Backward => f.write_str("backward"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModeError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("non-finite input {0} to the rate network")]
    NonFiniteInput(f64),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("non-finite state during {direction} pass at step {step}")]
    NonFiniteState { direction: Direction, step: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("trajectories are on different time grids")]
    GridMismatch,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("no training segments: {0}")]
    NoSegments(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error("forecast failed for request at minute {minute}: {source}")]
    Forecast {
        minute: u32,
        #[source]
        source: Box<ModeError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ModeError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ModeError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True when the error stems from user-supplied configuration rather than
    /// a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ModeError::InvalidConfig { .. } | ModeError::InvalidArchitecture(_) | ModeError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, ModeError>;
