use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("hermitian symmetry violated: defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    SymmetryViolated { defect: f64, tolerance: f64 },
    #[error("grid mismatch: n={left} vs n={right}")]
    GridMismatch { left: usize, right: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("spectrum under-resolved: {usable} usable shells in fit window (need 4)")]
    UnderResolved { usable: usize },
    #[error("no analyticity margin: fitted strip width is zero")]
    NoAnalyticityMargin,
    #[error("state has diverged")]
    Diverged,
    #[error("empty ledger")]
    EmptyLedger,
    #[error("config error at line {line}: key `{key}`: {message}")]
    Config { key: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("no ledger found in {0}")]
    NoLedger(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}
