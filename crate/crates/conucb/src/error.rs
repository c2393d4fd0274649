//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix expected to be positive definite failed its Cholesky
    /// factorization. `pivot` is the first column whose pivot was not
    /// strictly positive; `value` is the offending pivot.
    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// A quadratic form that must be nonnegative came out below -1e-12.
    #[error("quadratic form is negative beyond tolerance ({value:.3e})")]
    NegativeQuadraticForm { value: f64 },

    /// Invalid configuration detected before any computation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller broke an API precondition (empty slate, no candidates, ...).
    #[error("{0}")]
    Usage(String),

    /// A data file failed to parse. `line` is 1-based; line 0 means the
    /// problem is with the file as a whole.
    #[error("{path}:{line}: {msg}")]
    Load {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn load(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Load {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
