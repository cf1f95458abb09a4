use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GspError>;

#[derive(Debug, Error)]
pub enum GspError {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shift operator is not symmetric; this measure is defined for undirected graphs only")]
    NotSymmetric,

    #[error(
        "shift operator has zero spectral radius (nilpotent); the normalized shift is undefined"
    )]
    ZeroSpectralRadius,

    #[error(
        "shift operator is not diagonalizable within tolerance (eigenvector condition number {vcond:e}); \
         use the learned orthonormal DGFT instead"
    )]
    NotDiagonalizable { vcond: f64 },

    #[error(
        "signal is not recoverable from the sampling set: rank {rank} < bandwidth {bandwidth}"
    )]
    Unrecoverable { rank: usize, bandwidth: usize },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("unstable model: spectral radius {radius} >= 1")]
    Unstable { radius: f64 },

    #[error("infeasible constraints: projection residual {residual:e}")]
    Infeasible { residual: f64 },

    #[error("size cap exceeded: n = {n} > {cap}")]
    SizeCap { n: usize, cap: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<GspError>,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: index out of range: {msg}")]
    OutOfBounds {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GspError {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        GspError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors produced by a numerical routine rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            GspError::ZeroSpectralRadius
            | GspError::NotDiagonalizable { .. }
            | GspError::Unrecoverable { .. }
            | GspError::IllPosed(_)
            | GspError::Unstable { .. }
            | GspError::Infeasible { .. } => true,
            GspError::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
