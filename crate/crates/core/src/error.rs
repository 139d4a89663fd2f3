use std::io;

use thiserror::Error;

use crate::ndmath::MathError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("leakage detected: {0}")]
    Leakage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code: 1 contract/config, 2 numerical, 3 leakage.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Math(MathError::NonFinite(_) | MathError::Degenerate(_)) | Error::Numerical(_) => 2,
            Error::Leakage(_) => 3,
            _ => 1,
        }
    }
}
