use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed validation. `field` is a dotted path into the config.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("escape probability {which} must be positive, got {value}")]
    ZeroEscape { which: &'static str, value: f64 },

    #[error("ill-conditioned household solve (n={n}, k={k}): P({i},{j}) = {value:e}")]
    IllConditioned { n: usize, k: usize, i: usize, j: usize, value: f64 },

    #[error("balance iteration did not converge in {iterations} iterations (last z = ({z_m}, {z_s}))")]
    BalanceNotConverged { iterations: usize, z_m: f64, z_s: f64 },

    #[error("extinction threshold not reached by t = {t} (infective fraction {infective:e})")]
    ExtinctionNotReached { t: f64, infective: f64 },

    #[error("ode integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("simulation exceeded the event budget of {0} events")]
    EventBudget(u64),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True when the failure is numerical rather than bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroEscape { .. }
                | Error::IllConditioned { .. }
                | Error::BalanceNotConverged { .. }
                | Error::ExtinctionNotReached { .. }
                | Error::Integration { .. }
                | Error::EventBudget(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Csv { .. })
    }
}
