use thiserror::Error;

/// Errors produced by the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("monomial has total degree {found}, expected {expected}")]
    DegreeMismatch { expected: u32, found: u32 },

    #[error("reference signal is constant, fit is undefined")]
    ConstantSignal,

    #[error("empty input")]
    Empty,

    #[error("signal of length {len} is too short for memory {memory}")]
    SignalTooShort { len: usize, memory: usize },

    #[error("expansion needs {count} monomials, limit is {limit}")]
    GuardExceeded { count: u128, limit: u128 },

    #[error("kernel matrix is ill-conditioned: factorization failed with jitter up to {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("non-finite kernel values at rows {rows:?}")]
    NonFinite { rows: Vec<usize> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fold {index}: {source}")]
    Fold {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Broad failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Limits,
    Input,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::GuardExceeded { .. } => ErrorClass::Limits,
            Error::IllConditioned { .. } | Error::NonFinite { .. } | Error::ConstantSignal => {
                ErrorClass::Numerical
            }
            Error::Fold { source, .. } => source.class(),
            _ => ErrorClass::Input,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
