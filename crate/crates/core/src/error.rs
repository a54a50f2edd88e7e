use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the waveform design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid angle grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("diagonal entry {index} is {value}, expected 1")]
    NotUnitDiagonal { index: usize, value: f64 },

    #[error("arcsin argument {0} lies outside [-1, 1]")]
    ArcsinDomain(f64),

    #[error("gradient is near-singular at entry ({row}, {col}) with |value| = {value}")]
    NearSingularGradient { row: usize, col: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: &'static str, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed record in {}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(field: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            field,
            message: message.into(),
        }
    }

    /// True for errors caused by an invalid configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
