use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}:{line}: cannot parse {value:?} as a number")]
    Parse {
        path: PathBuf,
        line: usize,
        value: String,
    },

    #[error("row count mismatch: {what} has {found} rows, expected {expected}")]
    RowCountMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("class index {index} out of range for {class_count} classes")]
    ClassOutOfRange { index: usize, class_count: usize },

    #[error("instance {0} is not observed in any view")]
    UnobservedInstance(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("infeasible missing-view rates: {0}")]
    InfeasibleMask(String),

    #[error("mask resampling gave up after {0} attempts")]
    RetryBudgetExhausted(usize),

    #[error("labeled rate {rate} gives {labeled} labeled instances, fewer than {classes} classes")]
    LabeledRateTooSmall {
        rate: f64,
        labeled: usize,
        classes: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot form {requested} rule clusters: {reason}")]
    Clustering { requested: usize, reason: String },

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
