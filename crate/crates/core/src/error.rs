use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation and forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate observation for {date} hour {hour}")]
    DuplicateKey { date: chrono::NaiveDate, hour: u8 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: need at least {needed}, got {got} ({what})")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("value {value} outside domain [{lo}, {hi}]")]
    OutsideDomain { value: f64, lo: f64, hi: f64 },

    #[error(
        "no kernel mass at grid point ({u}, {v}) for bandwidth {bandwidth}; try a larger bandwidth"
    )]
    NoKernelMass { u: f64, v: f64, bandwidth: f64 },

    #[error("requested {requested} components but usable rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("ill-conditioned system (condition number {condition:.3e}): {context}")]
    IllConditioned { condition: f64, context: String },

    #[error("singular design matrix; collinear terms: {}", terms.join(", "))]
    SingularDesign { terms: Vec<String> },

    #[error("optimizer did not converge after {iterations} iterations (objective {objective}, gradient norm {gradient_norm:.3e})")]
    NoConvergence {
        iterations: usize,
        objective: f64,
        gradient_norm: f64,
        best: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("artifact schema mismatch: expected version {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
