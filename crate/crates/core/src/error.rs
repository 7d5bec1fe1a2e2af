//! Error type shared across the toolkit.

use std::path::PathBuf;
use thiserror::Error;

/// Unified error for ingestion, feature building, fitting and reporting.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed content at a specific line of an input file.
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    /// A table does not match its expected schema.
    #[error("schema mismatch in {path}: {msg}")]
    Schema { path: PathBuf, msg: String },

    /// Invalid input data: violated invariant, missing value, bad argument.
    #[error("{0}")]
    Input(String),

    /// A pipeline artifact has not been produced yet.
    #[error("missing artifact {path}: run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    /// The SNR statistic is undefined for a signal (all-zero or too short).
    #[error("undefined SNR: {0}")]
    UndefinedSnr(String),

    /// Numerical failure: rank deficiency, zero variance, too few rows.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl AuditError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AuditError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        AuditError::Parse { path: path.into(), line, msg: msg.into() }
    }

    pub fn schema(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        AuditError::Schema { path: path.into(), msg: msg.into() }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        AuditError::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        AuditError::Numerical(msg.into())
    }

    /// Process exit code contract: 1 for input errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            AuditError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, AuditError>;
