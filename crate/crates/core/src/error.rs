//! Error type shared across the kernel.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration value (resolutions, weights, schedules).
    #[error("config error: {0}")]
    Config(String),

    /// Input data rejected (degenerate mesh, empty cloud, bad topology).
    #[error("input error: {0}")]
    Input(String),

    /// Malformed file content.
    #[error("parse error: {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Entity or feature outside the supported subset of a format.
    #[error("unsupported entity: {0}")]
    Unsupported(String),

    /// Non-finite value encountered during optimization.
    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(path: &str, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }
}
