//! Error type shared across the library.

use thiserror::Error;

/// Errors produced while loading cohorts, fitting clusterings, or building reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: embedding has {found} entries, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("group {0} has no instances; a two-group audit needs both")]
    EmptyGroup(char),

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
