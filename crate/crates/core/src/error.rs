use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid replacement rule: {0}")]
    InvalidRule(String),

    #[error("invalid entry distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("urn corrupted at t = {time}: drawing would leave ({white}, {blue}) balls")]
    Corruption { white: i64, blue: i64, time: f64 },

    #[error("replica {index} failed: {source}")]
    Replica {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("order cap {0} is out of range (1..={max})", max = crate::moment_engine::MAX_ORDER_CAP)]
    OrderCap(u32),

    #[error("invalid time grid: {0}")]
    TimeGrid(String),

    #[error("moment solver failed: {0}")]
    Solver(String),

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
