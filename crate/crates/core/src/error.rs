use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("code length mismatch: {left} bits vs {right} bits")]
    CodeLengthMismatch { left: usize, right: usize },

    #[error("non-binary value {value} at row {row}, column {col}")]
    NonBinary { row: usize, col: usize, value: u8 },

    #[error("stray bits set beyond bit {bits} in byte at offset {offset}")]
    StrayBits { offset: usize, bits: usize },

    #[error("payload size mismatch: expected {expected} bytes, got {actual}")]
    PayloadSize { expected: usize, actual: usize },

    #[error("corrupt vecs file: {reason} at byte offset {offset}")]
    CorruptVecs { offset: u64, reason: String },

    #[error("inconsistent vector dimension at record {record}: expected {expected}, got {actual}")]
    InconsistentDimension {
        record: usize,
        expected: usize,
        actual: usize,
    },

    #[error("not an index file: bad magic {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported index version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("checksum failure in index section {section}: {detail}")]
    Checksum { section: String, detail: String },

    #[error("index does not support mode {0}")]
    ModeUnavailable(String),

    #[error("malformed index: {0}")]
    MalformedIndex(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
