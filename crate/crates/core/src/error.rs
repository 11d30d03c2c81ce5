use thiserror::Error;

/// Errors raised by the toolkit.
///
/// `Precondition` and `Configuration` are refusals: the inputs are well formed but an
/// analytical hypothesis or a resolution requirement is not met. Callers (the CLI in
/// particular) map them to a distinct exit status.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("missing derivative: {0}")]
    MissingDerivative(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors that reject the request rather than signal a failure.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Configuration(_) | Error::Usage(_) | Error::Precondition(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
