use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// Wrong magic bytes, unsupported version or dtype.
    #[error("format error: {0}")]
    Format(String),

    /// The file is shorter than its header claims, or internally inconsistent.
    #[error("corrupt file: {0}")]
    Corruption(String),

    #[error("row {row} has zero norm and cannot be normalized")]
    DegenerateVector { row: usize },

    #[error("row {row} is not unit-normalized (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: {field} {value} is out of range")]
    Range {
        line: usize,
        field: &'static str,
        value: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{embeddings} embedding rows but {records} metadata records")]
    Alignment { embeddings: usize, records: usize },

    #[error("duplicate observation id {0}")]
    DuplicateId(u64),

    #[error("requested {requested} clusters but only {available} vectors are available")]
    Capacity { requested: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("query is not unit-normalized (norm {norm})")]
    Normalization { norm: f64 },

    #[error("invalid search parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),
}
