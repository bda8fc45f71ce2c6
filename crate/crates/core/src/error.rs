use thiserror::Error;

use crate::config::ConfigError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the model.
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error(transparent)]
    Config(#[from] ConfigError),

    /// The adaptive integrator could not hold probability drift within bounds.
    #[error("solver error at z = {z:.6e} m (step {step:.3e} m): {reason}")]
    Solver { z: f64, step: f64, reason: String },

    #[error("normal equations are rank deficient; unidentifiable combination: {combination}")]
    RankDeficient { combination: String },

    #[error("invalid fit problem: {0}")]
    FitSetup(String),

    #[error("unknown model `{name}`; available: {available}")]
    UnknownModel { name: String, available: String },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            op,
            reason: reason.into(),
        }
    }
}
