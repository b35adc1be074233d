use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column '{column}': {message}")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("no dates common to all tickers")]
    EmptyOverlap,

    #[error("ticker '{ticker}' has insufficient history: first date {first}, required {required}")]
    InsufficientHistory {
        ticker: String,
        first: chrono::NaiveDate,
        required: chrono::NaiveDate,
    },

    #[error("duplicate ticker '{0}'")]
    DuplicateTicker(String),

    #[error("invalid price table: {0}")]
    InvalidPriceTable(String),

    #[error("split boundary {boundary} is outside the date range {first}..{last}")]
    BoundaryOutOfRange {
        boundary: chrono::NaiveDate,
        first: chrono::NaiveDate,
        last: chrono::NaiveDate,
    },

    #[error("need at least {required} rows, got {actual}")]
    TooFewRows { required: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("ticker '{0}' has zero variance")]
    ZeroVariance(String),

    #[error("ticker '{0}' has zero risk")]
    ZeroRisk(String),

    #[error("ticker mismatch: {0}")]
    TickerMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("malformed linkage tree: {0}")]
    MalformedTree(String),

    #[error("need at least {required} leaves, got {actual}")]
    TooFewLeaves { required: usize, actual: usize },

    #[error("cluster count {k} out of range 1..={max}")]
    ClusterCountOutOfRange { k: usize, max: usize },

    #[error("empty cluster member set")]
    EmptyCluster,

    #[error("invalid parameter '{name}': {message}")]
    InvalidParameter { name: String, message: String },

    #[error("missing report for sector '{sector}', method '{method}'")]
    MissingCell { sector: String, method: String },

    #[error("invalid configuration field '{field}': {message}")]
    Config { field: String, message: String },

    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } => ErrorKind::Validation,
            _ => ErrorKind::Data,
        }
    }
}
