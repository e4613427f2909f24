use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-positive scale {0} (rotation estimate is likely grossly wrong)")]
    NonPositiveScale(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no consensus: best model had {best} inliers, need {required}")]
    NoConsensus { best: usize, required: usize },
    #[error("lost track: {0}")]
    LostTrack(String),
    #[error("joint {joint} state {value} outside limits [{lo}, {hi}]")]
    OutOfLimits {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("unknown category template `{0}`")]
    UnknownTemplate(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
