use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A law or policy parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A sequence expression failed to parse or validate.
    #[error("invalid sequence expression: {0}")]
    Grammar(String),

    /// An operation was asked to work on data outside its domain,
    /// e.g. a negative series term or an empty tail window.
    #[error("domain error: {0}")]
    Domain(String),

    /// An experiment or criterion configuration is malformed.
    #[error("config error: {0}")]
    Config(String),

    /// A series term is NaN; the classifier cannot order it.
    #[error("non-finite term at k={k}")]
    NonFiniteTerm { k: usize },

    /// A series term is negative; term sequences must be nonnegative.
    #[error("negative term at k={k}: {value}")]
    NegativeTerm { k: usize, value: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
