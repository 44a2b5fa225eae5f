use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every extent must be at least 1")]
    InvalidShape(Vec<usize>),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("empty batch")]
    EmptyBatch,

    #[error("cache mismatch: {0}")]
    CacheMismatch(String),

    #[error("dataset structure error at {path}: {msg}")]
    DatasetStructure { path: PathBuf, msg: String },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("sampling infeasible: {0}")]
    SamplingInfeasible(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("checkpoint format error at byte offset {offset}: {msg}")]
    CheckpointFormat { offset: u64, msg: String },

    #[error("degenerate labels: need at least one positive and one negative pair (got {n_pos} positive, {n_neg} negative)")]
    DegenerateLabels { n_pos: usize, n_neg: usize },

    #[error("invalid configuration `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    /// True for failures of the numeric kind (divergence, degenerate
    /// metric input) as opposed to malformed inputs or usage.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Divergence(_) | Error::DegenerateLabels { .. }
        )
    }
}
