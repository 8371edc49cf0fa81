use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Probe pressure spread too small to resolve a flow direction.
    #[error("no-flow degenerate sample: pressure spread {delta_p:e} Pa <= threshold {threshold:e} Pa")]
    NoFlow { delta_p: f64, threshold: f64 },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("allocation problem is not strictly convex (lambda0 + lambda1 = {0})")]
    NotStrictlyConvex(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("condition outside the plant envelope: {0}")]
    OutOfEnvelope(String),

    #[error("unsupported model document: {0}")]
    Format(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
