//! Crate-wide error type and result alias.

use std::path::PathBuf;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced a non-finite value (blowup, divergence).
    #[error("numerical error: {0}")]
    Numerics(String),

    /// A treatment or filter left no usable data.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A persisted file could not be decoded.
    #[error("format error in {path}: {kind}")]
    Format { path: PathBuf, kind: FormatErrorKind },

    /// Configuration file problems.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What exactly went wrong while decoding a binary file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FormatErrorKind {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version")]
    UnsupportedVersion,
    #[error("file truncated")]
    Truncated,
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("invalid field value")]
    InvalidField,
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, kind: FormatErrorKind) -> Self {
        Error::Format { path: path.into(), kind }
    }

    /// Process exit code for the CLI: 2 for data problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerics(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
