use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("bad chunk: {0}")]
    Chunk(String),
    #[error("unknown language tag `{0}`")]
    Language(String),
    #[error("invalid synthesis spec: {0}")]
    Spec(String),
    #[error("transliteration coverage: {0}")]
    Coverage(String),
    #[error("invalid stage plan: {0}")]
    Plan(String),
    #[error("chenone inventory mismatch: {0}")]
    Inventory(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("transliteration service: {0}")]
    Service(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Service,
    Internal,
}

impl Error {
    pub fn parse(line: usize, msg: impl fmt::Display) -> Self {
        Error::Parse {
            line,
            msg: msg.to_string(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Plan(_) | Error::Parameter(_) | Error::Spec(_) => {
                ErrorCategory::Config
            }
            Error::Service(_) => ErrorCategory::Service,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::Checkpoint(_)
            | Error::Coverage(_)
            | Error::Inventory(_)
            | Error::Language(_)
            | Error::Io(_) => ErrorCategory::Data,
            _ => ErrorCategory::Internal,
        }
    }
}
