use thiserror::Error;

/// Errors raised by the simulator and analytical toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error("target BER {target:e} is not bracketed by the curve")]
    NotBracketed { target: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
