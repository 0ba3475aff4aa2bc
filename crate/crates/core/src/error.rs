use std::path::PathBuf;

/// Errors produced anywhere in the kernel pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("{param} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        param: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("kernel matrix is not positive semidefinite: minimum eigenvalue {min_eigenvalue:.3e} below -{slack:.1e}")]
    NotPsd { min_eigenvalue: f64, slack: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
