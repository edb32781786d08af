use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration value, names the offending key.
    #[error("configuration error: `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite values, lost positive definiteness and similar.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Closed-form excess MSE with a non-positive denominator.
    #[error("predicted instability: denominator {margin:.6e} is not positive")]
    PredictedInstability { margin: f64 },

    #[error("i/o error on `{path}`: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            reason: err.to_string(),
        }
    }
}
