use std::path::PathBuf;

use crate::game::AgentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate economy: {0}")]
    DegenerateEconomy(String),

    #[error("non-finite value for {agent} at iteration {iteration}: {what}")]
    NonFinite {
        agent: AgentId,
        iteration: usize,
        what: String,
    },

    #[error("no sign change while bracketing the fixed point on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Re-tags a non-finite error with the training iteration it surfaced in.
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::NonFinite { agent, what, .. } => Error::NonFinite {
                agent,
                iteration,
                what,
            },
            other => other,
        }
    }
}
