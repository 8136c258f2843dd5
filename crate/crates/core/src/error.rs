//! Error type shared across the back-end.
//!
//! Errors split into two classes: [`ErrorClass::Data`] for malformed or
//! inconsistent inputs (bad files, invariant violations, unresolved ids)
//! and [`ErrorClass::Numerical`] for failures of the numerics themselves
//! (lost positive definiteness, singular scatter, zero norms). The CLI
//! maps the classes to distinct exit codes.

use std::path::PathBuf;

use thiserror::Error;

/// Trial side an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Enroll,
    Test,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Enroll => write!(f, "enroll"),
            Side::Test => write!(f, "test"),
        }
    }
}

/// Coarse error class, used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data.
    Data,
    /// Numerical failure (indefinite matrices, zero norms, no convergence).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("duplicate id `{id}` in {context}")]
    DuplicateId { id: String, context: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("unknown trial label `{token}`")]
    UnknownLabel { token: String },

    #[error("unresolved id `{id}` at trial {index}")]
    UnresolvedId { id: String, index: usize },

    #[error("invalid {name}: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("cohort for {side} side `{id}` has {len} scores, need at least 2")]
    CohortTooSmall { side: Side, id: String, len: usize },

    #[error("zero-norm vector for utterance `{utterance_id}`")]
    ZeroNorm { utterance_id: String },

    #[error("zero cohort standard deviation on {side} side `{id}`")]
    ZeroCohortStd { side: Side, id: String },

    #[error("matrix not positive definite in {context}")]
    NotPositiveDefinite { context: String },

    #[error("singular matrix in {context}")]
    SingularMatrix { context: String },

    #[error("failed to converge: {context}")]
    Convergence { context: String },
}

impl Error {
    pub fn invalid(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            message: message.into(),
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Class of this error, for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ZeroNorm { .. }
            | Error::ZeroCohortStd { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::SingularMatrix { .. }
            | Error::Convergence { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
