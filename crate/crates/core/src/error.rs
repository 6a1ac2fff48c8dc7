use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {path}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        path: PathBuf,
        expected: [usize; 3],
        found: [usize; 3],
    },

    #[error("unknown tissue label `{0}`")]
    UnknownTissue(String),

    #[error("weight invariant violated at voxel {voxel:?}: tissue fractions sum to {sum}")]
    WeightSum { voxel: [usize; 3], sum: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("k-space sample {index} out of range: {coord} not in [{lo}, {hi})")]
    OutOfRange {
        index: usize,
        coord: f64,
        lo: f64,
        hi: f64,
    },

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("{shots} shots cannot be split into frames of {per_frame}")]
    Indivisible { shots: usize, per_frame: usize },

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("solver diverged at iteration {iteration}: objective {objective} vs initial {initial}")]
    Diverged {
        iteration: usize,
        objective: f64,
        initial: f64,
    },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
