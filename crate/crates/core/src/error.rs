use thiserror::Error;

/// Errors raised by the sampling, estimation and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation would place an atom where the carrier space forbids it.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// The support of a test function leaves the exactly-sampled observation window.
    #[error("window precondition violated: {what}; required window at most {required}, spec has {actual}")]
    WindowViolation {
        what: String,
        required: f64,
        actual: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A decoration realization exceeded its declared almost-sure maxmod bound.
    #[error("decoration bound violated: realized maxmod {realized} exceeds declared bound {bound}")]
    BoundViolation { realized: f64, bound: f64 },

    #[error(
        "acceptance starvation: {accepted} of {target} accepted after {attempts} attempts \
         (expected acceptance rate {expected_rate:.3e})"
    )]
    AcceptanceStarvation {
        accepted: usize,
        target: usize,
        attempts: u64,
        expected_rate: f64,
    },

    #[error("range error: {0}")]
    Range(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
