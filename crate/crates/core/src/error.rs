use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by system construction, the solvers and the diagnostics.
#[derive(Debug, Error)]
pub enum MrkError {
    #[error("row {row} has zero Euclidean norm")]
    ZeroNormRow { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("row {row} (class {class}) is inconsistent: |M x - b| = {residual:e}")]
    InconsistentRow { row: usize, class: usize, residual: f64 },

    #[error("class counts sum to {sum} but the system has {rows} rows")]
    ClassCountMismatch { sum: usize, rows: usize },

    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },

    #[error("class {class} has rank {rank}, expected full column rank {dim}")]
    RankDeficient { class: usize, rank: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Domain(String),

    #[error("exhaustive labeling search supports at most {max} iterates, got {found}")]
    UnsupportedSize { max: usize, found: usize },

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {column}: cannot parse {cell:?} as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        cell: String,
    },
}

pub type Result<T, E = MrkError> = std::result::Result<T, E>;
