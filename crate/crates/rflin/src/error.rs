//! Crate-wide error type with CLI exit-code classification.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { msg: String, line: usize, col: usize },

    #[error("model error: {0}")]
    Model(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("relative degree error: {0}")]
    Degree(String),

    #[error("uncertainty bound error: {0}")]
    Bound(String),

    #[error("riccati error: {0}")]
    Riccati(String),

    #[error("simulation error: {0}")]
    Sim(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: one code per failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Model(_) => 2,
            Error::Degree(_) => 3,
            Error::Bound(_) => 4,
            Error::Riccati(_) => 5,
            Error::Sim(_) => 6,
            Error::Eval(_) | Error::Io(_) => 1,
        }
    }
}
