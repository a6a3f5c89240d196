use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the clustering pipeline.
#[derive(Debug, Error)]
pub enum MmcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate mapping block: smallest singular value {smallest:e} below {threshold:e}")]
    DegenerateMapping { smallest: f64, threshold: f64 },

    #[error("degenerate bandwidth: all pairwise distances are zero")]
    DegenerateBandwidth,

    #[error("instance {row} is disconnected (row sum {sum:e} below 1e-12)")]
    DisconnectedInstance { row: usize, sum: f64 },

    #[error("known mapping is not one-to-one: instance {index} appears twice on the {side} side")]
    NotOneToOne { side: &'static str, index: usize },

    #[error("index {index} out of range for {what} of size {len}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("degenerate consensus: all view weights of source {source_index} are zero")]
    ZeroWeights { source_index: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// Wraps an error raised inside the optimizer with where it happened.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<MmcError>,
    },
}

impl MmcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MmcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MmcError::Output {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        MmcError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input files or configuration rather than
    /// a numerical failure of the pipeline.
    pub fn is_input_error(&self) -> bool {
        match self {
            MmcError::Parse { .. }
            | MmcError::Io { .. }
            | MmcError::Json { .. }
            | MmcError::InvalidConfig(_)
            | MmcError::InvalidProblem(_)
            | MmcError::NotOneToOne { .. }
            | MmcError::OutOfRange { .. } => true,
            MmcError::Context { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = MmcError> = std::result::Result<T, E>;
