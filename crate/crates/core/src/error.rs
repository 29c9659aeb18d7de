use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no data")]
    NoData,

    #[error("extrapolation beyond data support at node ({i}, {j})")]
    Extrapolation { i: usize, j: usize },

    #[error("over-trimmed: {nx}x{ny} grid left after trimming")]
    OverTrimmed { nx: usize, ny: usize },

    #[error("degenerate window")]
    DegenerateWindow,

    #[error("ensemble members do not share one grid spec (member {index})")]
    SpecMismatch { index: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("degenerate periodogram")]
    DegeneratePeriodogram,

    #[error(
        "embedding not nonnegative; enlarge embedding factor \
         (clipped mass fraction {clipped_fraction:.4} at factor {factor})"
    )]
    Embedding { clipped_fraction: f64, factor: usize },

    #[error("degenerate tessellation: {empty} empty grain(s) after {retries} reseeding rounds")]
    DegenerateTessellation { empty: usize, retries: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
