use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SocError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SocError {
    #[error("invalid configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("regression window not ready: {filled} of {capacity} rows")]
    NotReady { filled: usize, capacity: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("sample at t={got} s rejected: expected t={expected} s")]
    OutOfOrder { expected: f64, got: f64 },

    #[error("invalid OCV map: {0}")]
    InvalidMap(String),

    #[error("invalid RC table: {0}")]
    InvalidRcTable(String),

    #[error("factorization failed: {0}")]
    Factorization(&'static str),

    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed CSV {path}: {reason}")]
    CsvFormat { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("missing input files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingInputs(Vec<PathBuf>),
}

impl SocError {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        SocError::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SocError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        SocError::Csv {
            path: path.into(),
            source,
        }
    }
}
