use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh has no face with positive area")]
    EmptyMesh,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("need at least {needed} points, got {available}")]
    TooFewPoints { needed: usize, available: usize },
    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(&'static str),
    #[error("quaternion norm {0} is not unit")]
    NonUnitQuaternion(f64),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("supplied patch index set is empty")]
    EmptyPatch,
    #[error("ground-truth set is empty")]
    EmptySet,
    #[error("ambiguous projection sign on axis {axis} (sum {sum:e})")]
    DegenerateProjection { axis: usize, sum: f64 },
    #[error("no ground truth for instance {0:?}")]
    MissingGroundTruth(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("schema error in field `{0}`")]
    Schema(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
