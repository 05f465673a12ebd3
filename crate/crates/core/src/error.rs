use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: I/O error")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("client {client} is starved: every eligible label pool is exhausted after {assigned} of {requested} samples")]
    Starved {
        client: usize,
        assigned: usize,
        requested: usize,
    },

    #[error("no scheduling candidates outside the context window ({window} of {clients} clients in window)")]
    NoCandidates { window: usize, clients: usize },

    #[error("policy {policy} requires {input}")]
    MissingInput {
        policy: &'static str,
        input: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("CSV read/write failed")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
