use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected size {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("resource cap exceeded: {what} = {value} exceeds cap {cap}")]
    Resource {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::Dimension { expected, found })
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
