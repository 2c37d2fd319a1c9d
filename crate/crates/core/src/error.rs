use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape or dimension mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid numeric range (e.g. uniform bounds with lo >= hi).
    #[error("range error: {0}")]
    Range(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed binary container or checkpoint.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid API or CLI usage (unknown name, bad flag combination).
    #[error("usage error: {0}")]
    Usage(String),

    /// Degenerate arithmetic (division by zero totals and similar).
    #[error("arithmetic error: {0}")]
    Arithmetic(String),

    /// Training aborted (non-finite gradients, checkpoint I/O failure).
    #[error("training error: {0}")]
    Training(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: usage errors are 2, everything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            _ => 1,
        }
    }
}
