use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of a formula (zero linewidth, negative density, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("bandwidth below Rabi frequency; CHS design point invalid (mu = {mu:.4} < 1)")]
    InvalidDesign { mu: f64 },

    #[error("integrator failed at t = {t:.6e} s (step {h:.3e} s, {steps} accepted steps): {reason}")]
    Integration {
        t: f64,
        h: f64,
        steps: usize,
        reason: String,
    },

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("fit is rank deficient: {0}")]
    Rank(String),

    #[error("table lookup: {0}")]
    Table(String),

    /// Invalid configuration; `key` points at the offending field.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    /// Configuration problems map to exit code 2, everything else to 1.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_) | Error::Csv(_))
    }
}
