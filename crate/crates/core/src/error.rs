use std::path::PathBuf;

use crate::matchlift::SdpSolution;

/// Errors produced by the segmentation pipeline and its stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud is degenerate: all points coincide")]
    DegenerateCloud,
    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),
    #[error("point index {index} out of range for cloud of {len} points")]
    InvalidIndex { index: usize, len: usize },
    #[error("degenerate neighborhood: {0}")]
    DegenerateNeighborhood(&'static str),
    #[error("degenerate polyhedron spec `{0}`: vertices are coplanar or too few")]
    DegenerateSpec(String),
    #[error("noise sigma must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("degenerate patch {0}: no surface statistics")]
    DegeneratePatch(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training data carries no ground-truth labels")]
    NoLabels,
    #[error("MatchLift solver did not converge after {} iterations (primal {:.3e}, dual {:.3e})",
        .0.iterations, .0.primal_residual, .0.dual_residual)]
    NotConverged(Box<SdpSolution>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("patch/point index mismatch: {0}")]
    IndexMismatch(String),
    #[error("input has no labels")]
    UnlabeledInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// True for errors caused by files or user input rather than by a pipeline stage.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. } | Error::Json(_))
    }

    /// Recovers the partial solution carried by [`Error::NotConverged`].
    pub fn into_partial_solution(self) -> Result<SdpSolution> {
        match self {
            Error::NotConverged(sol) => Ok(*sol),
            other => Err(other),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
