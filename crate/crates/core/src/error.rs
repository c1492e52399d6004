//! Error types shared across the toolkit.

use std::path::PathBuf;

use thiserror::Error;

/// Why a per-instance metric could not be computed. Callers that aggregate
/// over instances catch this, skip the instance, and report the count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UndefinedReason {
    /// Fewer than two retained values.
    TooShort,
    /// A score vector is constant, so ranks carry no information.
    ConstantScores,
    /// A highlight mask has no positive positions.
    NoGoldPositives,
    /// A representation batch has no variance after centering.
    ZeroVariance,
}

impl std::fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            UndefinedReason::TooShort => "fewer than two values",
            UndefinedReason::ConstantScores => "constant score vector",
            UndefinedReason::NoGoldPositives => "no gold-positive positions",
            UndefinedReason::ZeroVariance => "zero-variance batch",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A configuration value violates its contract (usage error).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An input value violates a precondition (data error).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A metric is undefined for this instance; aggregators skip and count.
    #[error("undefined value: {0}")]
    Undefined(UndefinedReason),

    /// A numeric result blew up (NaN or infinity).
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    /// True for the skip-and-count signals emitted by per-instance metrics.
    pub fn is_undefined(&self) -> bool {
        matches!(self, Error::Undefined(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
