//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Path-loss gain diverges: zero distance with a zero guard zone.
    /// Callers that want the limiting connection probability should map
    /// this to 1.
    #[error("singular path-loss gain: r = 0 with eps = 0")]
    SingularGain,

    /// The integrator met a non-finite rate entry and stopped.
    #[error("integration fault: non-finite rate {value} at entry ({i}, {j})")]
    IntegrationFault { i: usize, j: usize, value: f64 },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
