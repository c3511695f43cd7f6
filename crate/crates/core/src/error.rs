use thiserror::Error;

/// Errors raised by the interval constructions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed user input (counts, sizes, levels, configuration).
    #[error("{0}")]
    InvalidInput(String),

    /// A parameter point lies outside the model space.
    #[error("parameter outside the model space: {0}")]
    OutsideModel(String),

    /// A computation could not be carried out (degenerate variance, empty set, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The requested combination of statistic and calibration is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::OutsideModel(_) | Error::Unsupported(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
