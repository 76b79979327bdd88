use std::path::PathBuf;

/// Errors produced by the modeling, simulation and estimation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid interval: a = {a} > b = {b}")]
    InvalidInterval { a: f64, b: f64 },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dense kernel with {n_bins} bins exceeds the cap of {cap}; use the matrix-free mode")]
    Capacity { n_bins: usize, cap: usize },

    #[error("operation requires a dense kernel")]
    UnsupportedMode,

    #[error(
        "power iteration did not converge in {iterations} iterations (last l1 change {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate result: {0}")]
    DegenerateResult(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
