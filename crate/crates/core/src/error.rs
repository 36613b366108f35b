use std::fmt;

use thiserror::Error;

/// One failed invariant found by [`crate::model::validate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Offending object and slice, e.g. `obs_kernels[0][1][0][·]`.
    pub location: String,
    pub message: String,
    /// Magnitude of the numeric defect (0 when the defect is structural).
    pub defect: f64,
}

impl Violation {
    pub fn new(location: impl Into<String>, message: impl Into<String>, defect: f64) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
            defect,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.defect > 0.0 {
            write!(f, "{}: {} (defect {:.3e})", self.location, self.message, self.defect)
        } else {
            write!(f, "{}: {}", self.location, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {} violation(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("scenario mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("dataset has zero likelihood under every parameter")]
    ImpossibleDataset,

    #[error("observation (x={x}, y={y}) has zero probability under the current belief")]
    ImpossibleObservation { x: usize, y: usize },

    #[error("cap exceeded: {what} count {count} > cap {cap}")]
    CapExceeded { what: String, count: u128, cap: u128 },

    #[error("no belief node at round {round} matches the folded belief")]
    NodeNotFound { round: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
