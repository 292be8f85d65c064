use thiserror::Error;

/// Errors reported by the pricing engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A model or scheme parameter is outside its admissible range.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A configuration file or command-line override could not be used.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation produced an unusable result (singular solve, NaN price,
    /// failed diagnostic).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
