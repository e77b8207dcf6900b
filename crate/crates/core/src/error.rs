use thiserror::Error;

#[derive(Debug, Error)]
pub enum BookError {
    #[error("invalid price {0}")]
    InvalidPrice(f64),
    #[error("invalid tick size {0}")]
    InvalidTickSize(f64),
    #[error("order {order_id} rejected: {reason}")]
    InvalidOrder { order_id: u64, reason: &'static str },
    #[error("duplicate order id {0}")]
    DuplicateOrderId(u64),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("series is degenerate: {0}")]
    Degenerate(&'static str),
    #[error("need more than {k} samples for a tail of size {k}, got {n}")]
    TailTooLarge { k: usize, n: usize },
    #[error("tail cutoff must be at least 1")]
    EmptyTail,
    #[error("the (K+1)-th largest value is zero; tail is degenerate")]
    DegenerateTail,
    #[error("all tail log-ratios are zero")]
    AllTies,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("optimal transport is only implemented for one-dimensional clouds (got d = {0})")]
    UnsupportedDimension(usize),
    #[error("subsample size {requested} exceeds cloud size {available}")]
    SubsampleTooLarge { requested: usize, available: usize },
    #[error("no reference clouds supplied")]
    NoReferences,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series too short: need more than {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum TimegridError {
    #[error("transaction path must have {expected} minutes, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("day has no transactions")]
    DegenerateDay,
    #[error("simulation produced no trades")]
    DegenerateTrial,
    #[error("invalid transaction path: {0}")]
    InvalidPath(&'static str),
    #[error("bar series invalid: {0}")]
    InvalidBars(&'static str),
}

/// Failures reading or writing the CSV/JSON interchange files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: row {row}, column {column}: {message}")]
    Malformed {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Book(#[from] BookError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Timegrid(#[from] TimegridError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("every trial of the combination was degenerate ({0} trials)")]
    AllTrialsDegenerate(usize),
    #[error("scenario {0} has no stable parameter combination")]
    NoStableCombination(u8),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
