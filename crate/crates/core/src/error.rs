use thiserror::Error;

/// Errors raised across the laboratory.
///
/// Variants are grouped by how the command-line front end reports them:
/// input problems (`Domain`, `Parameter`, `InvalidProbability`,
/// `UnsupportedModel`, `WrongRegime`, `Config`) are validation failures, the
/// rest are numeric or experiment-quality failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("experiment quality: {0}")]
    ExperimentQuality(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by invalid input rather than by the computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Parameter(_)
                | Error::InvalidProbability(_)
                | Error::UnsupportedModel(_)
                | Error::WrongRegime(_)
                | Error::Config(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
