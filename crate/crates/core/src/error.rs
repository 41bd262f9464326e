use thiserror::Error;

use crate::network::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network:\n{0}")]
    InvalidNetwork(ValidationReport),

    #[error("unknown {0}")]
    Lookup(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("controller protocol violation: {0}")]
    Protocol(String),

    #[error("simulation invariant violated at t={clock}: {message}")]
    Invariant { clock: u64, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty rollout buffer")]
    EmptyBuffer,

    #[error("join error: {0}")]
    Join(String),

    #[error("run `{run}` failed: {source}")]
    Run {
        run: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl Error {
    pub fn in_run(self, run: impl Into<String>) -> Self {
        Error::Run {
            run: run.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
