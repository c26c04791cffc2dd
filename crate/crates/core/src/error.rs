use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the identification pipeline.
///
/// Variants carry a human-readable context string; [`Error::name`] gives a
/// stable machine-readable tag for reports and exit-code mapping.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("aliasing suspected: {0}")]
    AliasingSuspected(String),
    #[error("no leakage-test peak: {0}")]
    NoPeak(String),
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("inconsistent spectrum: {0}")]
    InconsistentSpectrum(String),
    #[error("phase correction failed: {0}")]
    PhaseCorrectionFailed(String),
    #[error("branch domain error: {0}")]
    BranchDomain(String),
    #[error("malformed record table: {0}")]
    Parse(String),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::AliasingSuspected(_) => "AliasingSuspected",
            Error::NoPeak(_) => "NoPeak",
            Error::DegenerateSignal(_) => "DegenerateSignal",
            Error::InconsistentSpectrum(_) => "InconsistentSpectrum",
            Error::PhaseCorrectionFailed(_) => "PhaseCorrectionFailed",
            Error::BranchDomain(_) => "BranchDomainError",
            Error::Parse(_) => "ParseError",
        }
    }

    /// True for errors that mean the data carry no usable signal (as opposed
    /// to a bad configuration).
    pub fn is_degenerate(&self) -> bool {
        !matches!(self, Error::Domain(_) | Error::Parse(_))
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
