use std::path::PathBuf;

use crate::camera::ViewId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("view bank is empty")]
    EmptyBank,

    #[error("duplicate view id {0}")]
    DuplicateView(ViewId),

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("clip has {0} frames, need at least 2")]
    ClipTooShort(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("diffusion time {0} outside [0, 1000]")]
    TimeOutOfRange(f64),

    #[error("normalizer must be positive, got {0}")]
    NonPositiveNormalizer(f64),

    #[error("student diverged at iteration {iter}: m={m}, s={s}")]
    Diverged { iter: usize, m: f64, s: f64 },

    #[error("generator returned {got} frames for segment {segment}, expected {expected}")]
    GeneratorContract {
        segment: usize,
        expected: usize,
        got: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn mismatch(what: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
