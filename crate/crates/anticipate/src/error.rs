use std::io;
use std::path::PathBuf;

use anticipate_core::Error as CoreError;

/// Pipeline errors. Each class maps to its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("missing {path}; run `anticipate {stage}` first")]
    Missing { path: PathBuf, stage: &'static str },
    #[error("malformed {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const MISMATCH: i32 = 5;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Format { path: path.into(), msg: msg.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Io { .. } | Error::Missing { .. } | Error::Format { .. } => exit::IO,
            Error::Mismatch(_) => exit::MISMATCH,
            Error::Core(e) => match e {
                CoreError::InvalidConfig(_)
                | CoreError::InfeasibleSpec(_)
                | CoreError::InvalidRatios(_)
                | CoreError::Stratification(_) => exit::CONFIG,
                CoreError::ShapeMismatch { .. }
                | CoreError::TokenOutOfRange { .. }
                | CoreError::UnknownParam(_)
                | CoreError::DuplicateParam(_) => exit::MISMATCH,
                _ => exit::NUMERIC,
            },
        }
    }
}
