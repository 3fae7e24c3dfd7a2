use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite loss at step {step}: recon={recon}, aux={aux}")]
    NonFiniteLoss { step: u64, recon: f64, aux: f64 },

    #[error("llm response has no `{marker}` line; raw response: {raw:?}")]
    LlmParse { marker: &'static str, raw: String },

    #[error("llm transport error: {0}")]
    LlmTransport(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, message: msg.into() }
    }
}
