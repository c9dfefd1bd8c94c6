use thiserror::Error;

/// Errors raised by environment construction, walk simulation and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("capacity exceeded: {what} needs {requested} bytes, cap is {cap} bytes")]
    Capacity { what: String, requested: u128, cap: u128 },

    #[error("environment undefined at site {0:?}")]
    WindowUnderrun(Vec<i64>),

    #[error("quantization failed: {0}")]
    Quantization(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("censored fraction {fraction:.3e} exceeds cap {cap:.3e} ({censored} of {trials} trials)")]
    ExcessiveCensoring {
        censored: u64,
        trials: u64,
        fraction: f64,
        cap: f64,
    },

    #[error("missing status for child box {0}")]
    MissingChild(String),

    #[error("malformed environment file: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
