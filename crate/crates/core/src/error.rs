use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("diverged evaluation: {0}")]
    Diverged(String),
    #[error("initialization failed: no finite starting point after {0} attempts")]
    Initialization(usize),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
