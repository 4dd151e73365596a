use std::fmt;

use thiserror::Error;

/// Which of the two particle filters raised an error.
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
pub enum SmcError {
    #[error("{direction} filter degenerated at time {time}: every particle weight is zero")]
    Degenerate { time: usize, direction: Direction },

    #[error("{direction} filter produced a NaN weight at time {time}")]
    NanWeight { time: usize, direction: Direction },

    #[error("artificial density vanishes at a surviving backward particle (time {time})")]
    InvalidXi { time: usize },

    #[error("every term of the two-filter combination at t = {time} is zero")]
    EmptyCombination { time: usize },

    #[error("transition density {value:e} exceeds the rejection bound {bound:e} at time {time}")]
    BoundViolated { time: usize, value: f64, bound: f64 },

    #[error("time index {n} outside {lo}..={hi}")]
    TimeOutOfRange { n: usize, lo: usize, hi: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("exact oracle unavailable: {0}")]
    OracleLimit(String),
}

impl SmcError {
    /// True for failures caused by particle weight collapse rather than bad input.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            SmcError::Degenerate { .. }
                | SmcError::NanWeight { .. }
                | SmcError::EmptyCombination { .. }
                | SmcError::InvalidXi { .. }
        )
    }
}

pub type Result<T, E = SmcError> = std::result::Result<T, E>;
