use std::io;

use thiserror::Error;

/// Errors produced anywhere in the quantization pipeline.
#[derive(Debug, Error)]
pub enum DpqError {
    #[error("code index {index} at position {position} is out of range for K = {k}")]
    IndexOutOfRange { position: usize, index: u32, k: usize },

    #[error("K = {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("expected {expected} bytes, got {actual}")]
    InvalidLength { expected: usize, actual: usize },

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("need at least K = {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },

    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("codebook row {row} of partition {partition} has zero norm")]
    ZeroNormRow { partition: usize, row: usize },

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("malformed {format} file: {detail}")]
    Format {
        format: &'static str,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = DpqError> = std::result::Result<T, E>;
