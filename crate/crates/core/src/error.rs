use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: line {line}, column `{column}`: cannot parse {value:?} as {expected}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
        expected: &'static str,
    },

    #[error("{path}: line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("{path}: no `{column}` column in header")]
    MissingColumn { path: PathBuf, column: &'static str },

    #[error("{0}: no instances")]
    NoInstances(PathBuf),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("label at row {row} is {value}, expected 0 or 1")]
    InvalidLabel { row: usize, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("no {0} instances")]
    MissingClass(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "conjugate gradient did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("training diverged at epoch {epoch}: {metric} is not finite")]
    Diverged { epoch: usize, metric: &'static str },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
