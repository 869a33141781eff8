use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("component index {index} out of range for {len} components")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("enumeration of {count} batches exceeds the limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("noise covariance is not positive semidefinite (discriminant {0:e})")]
    NoiseCovariance(f64),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("chain {chain:?} diverged at step {step} (|x| = {norm:e}, delta = {delta:e})")]
    Divergence {
        chain: Option<usize>,
        step: u64,
        norm: f64,
        delta: f64,
    },

    #[error("not enough samples: need at least {needed}, have {have}")]
    TooFewSamples { needed: usize, have: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: label {label:?} cannot be mapped to +1/-1")]
    UnmappableLabel { line: usize, label: String },

    #[error("no rows")]
    NoRows,

    #[error("degenerate split: train {train} rows, test {test} rows")]
    DegenerateSplit { train: usize, test: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Tags a divergence with the chain that produced it.
    pub fn in_chain(self, id: usize) -> Self {
        match self {
            Error::Divergence { step, norm, delta, .. } => Error::Divergence {
                chain: Some(id),
                step,
                norm,
                delta,
            },
            other => other,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
