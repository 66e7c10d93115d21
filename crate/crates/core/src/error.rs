use thiserror::Error;

/// Errors raised by the numerical kernels and the scenario harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A query outside the region where a quantity is defined
    /// (out-of-domain medium lookups, evanescent symbol evaluations, τ = 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or violated invariant of a configuration type.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numerical failure: NaN/Inf, singular systems, non-convergence.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A symbol was asked for derivatives it cannot supply.
    #[error("capability error: {0}")]
    Capability(String),

    /// Malformed grid file or sidecar.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code used by the command line front end:
    /// 1 for validation problems, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
