use std::io;

use thiserror::Error;

/// Errors produced by the coreference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at line {line}, field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty candidate set")]
    EmptyCandidateSet,

    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn schema(line: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Schema {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input data rather than numerics or usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Parse { .. }
                | Error::Schema { .. }
                | Error::BadMagic { .. }
                | Error::UnsupportedVersion(_)
                | Error::Checksum { .. }
                | Error::Truncated(_)
                | Error::Dimension(_)
                | Error::OutOfDomain(_)
                | Error::EmptyCandidateSet
        )
    }
}
