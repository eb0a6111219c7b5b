use thiserror::Error;

use crate::sim::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Integration produced a non-finite state. The partial trajectory ends at
    /// the last finite sample.
    #[error("trajectory diverged at t = {t}")]
    Divergence { t: f64, partial: Box<Trajectory> },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("infeasible budget: {0}")]
    Infeasible(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
