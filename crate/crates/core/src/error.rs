use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape error: {0}")]
    InputShape(String),

    #[error("validation error at entry ({row}, {col}): {reason}")]
    Validation {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid rank {rank} for {n} observations")]
    InvalidRank { rank: usize, n: usize },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("empty rank range {min}..={max}")]
    EmptyRange { min: usize, max: usize },

    #[error("refusing to enumerate partitions of {n} items; the limit is {max}")]
    EnumerationLimit { n: usize, max: usize },

    #[error("integer overflow computing {0}")]
    Overflow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("no draws in label sample input")]
    NoDraws,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
