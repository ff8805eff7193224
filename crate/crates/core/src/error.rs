use thiserror::Error;

/// A point or energy outside the region where the reduced system is defined.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("state (z={z}, rho={rho}) is on the axis, at the origin or not finite")]
    Singular { z: f64, rho: f64 },
    #[error("energy H={h} out of range: {reason}")]
    Energy { h: f64, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("step size underflow at t={t} (h={h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(u64),
    #[error("invalid integrator configuration: {0}")]
    Config(String),
}

/// Top-level error type for the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Precondition(_) | Error::Config(_) | Error::Format(_) | Error::Checkpoint(_) | Error::Io(_)
        ) || matches!(self, Error::Domain(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
