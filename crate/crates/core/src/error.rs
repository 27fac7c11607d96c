//! Error types shared by every layer of the simulator.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A violated precondition on the shape of inputs (empty lists, unknown ids, ...).
    #[error("structural error: {0}")]
    Structural(String),

    #[error("ingestion error in {path}: field `{field}`: {message}")]
    Ingestion {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("config error at {location}: key `{key}`: {message}")]
    Config {
        key: String,
        location: String,
        message: String,
    },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("exact Shapley over {players} players exceeds the cap of {cap}; use monte_carlo_shapley")]
    TooManyPlayers { players: usize, cap: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(
        key: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Config {
            key: key.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Ingestion { .. } => 3,
            Error::Round { source, .. } => match source.as_ref() {
                Error::Ingestion { .. } => 3,
                _ => 4,
            },
            _ => 4,
        }
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
