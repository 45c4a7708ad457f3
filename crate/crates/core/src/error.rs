use thiserror::Error;

use crate::trainer::IterationRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid grouping scheme: {0}")]
    InvalidScheme(String),

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("coefficients are untrained (all zero)")]
    Untrained,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("training diverged after {} iterations", history.len())]
    Diverged { history: Vec<IterationRecord> },

    #[error("signal too short: need at least {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: usize, got: usize) -> Self {
        Error::ShapeMismatch {
            what,
            expected,
            got,
        }
    }
}
