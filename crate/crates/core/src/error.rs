use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dense representation capped at {cap} qubits, requested {requested}")]
    DenseCap { cap: usize, requested: usize },

    #[error("operator is not Hermitian: {0}")]
    NonHermitian(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// Structured error for the binary record format; `offset` is the byte
    /// position at which decoding failed.
    #[error("malformed record at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("graph is disconnected: {0}")]
    Disconnected(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
