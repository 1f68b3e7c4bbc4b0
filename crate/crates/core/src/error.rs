use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are coarse on purpose: the CLI maps each onto a fixed exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// Unknown column, malformed schema, mismatched dimensions.
    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed configuration document.
    #[error("config error: {0}")]
    Config(String),

    /// Conditioning event has zero probability under the oracle.
    #[error("undefined posterior: {0}")]
    UndefinedPosterior(String),

    /// An instance group selected by a query is empty.
    #[error("no instances: {0}")]
    NoInstances(String),

    /// The operation needs binary states (or another structural property) the input lacks.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Exact enumeration would exceed its budget.
    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("empty dataset")]
    EmptyDataset,

    /// Non-finite intermediate value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
