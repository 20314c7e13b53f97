use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation core. The display string names the
/// subsystem that failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{module}: invalid argument: {msg}")]
    InvalidArgument { module: &'static str, msg: String },

    #[error("mesh: {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("assembly: triplet {position} has index ({row}, {col}) outside a {n}x{n} system")]
    IndexOutOfRange {
        position: usize,
        row: usize,
        col: usize,
        n: usize,
    },

    #[error("assembly: stale compression mapping ({0})")]
    StaleMapping(String),

    #[error("{module}: dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        module: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("models: {0}")]
    Setup(String),

    #[error("{module}: non-finite value: {msg}")]
    NonFinite { module: &'static str, msg: String },

    #[error("ndprecond: matrix is not positive definite (pivot {pivot} = {value:e})")]
    Indefinite { pivot: usize, value: f64 },

    #[error("ndprecond: {0}")]
    Lifecycle(String),

    #[error("krylov: solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("krylov: zero diagonal entry at row {0}")]
    ZeroDiagonal(usize),

    #[error("scenario: config: {0}")]
    Config(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(module: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
