use thiserror::Error;

/// Errors produced by the tomography toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid beam geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid mode basis: {0}")]
    InvalidBasis(String),

    #[error("invalid scan geometry: {0}")]
    InvalidScanGeometry(String),

    #[error("negative radial coordinate r = {0}")]
    NegativeRadius(f64),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("basis mismatch: {0:?} vs {1:?}")]
    BasisMismatch(Vec<i32>, Vec<i32>),

    #[error("rank {rank} out of range 1..={dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("mode ell = {0} is not part of the basis")]
    MissingMode(i32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty measurement map")]
    EmptyMap,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
