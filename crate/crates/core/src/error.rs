use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("innovation covariance singular")]
    SingularInnovation,
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("KL undefined for this noise model")]
    KlUndefined,
    #[error("closed loop not IES; bound void")]
    BoundVoid,
    #[error("insufficient calibration data: need {needed} traces, got {got}")]
    InsufficientCalibration { needed: usize, got: usize },
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("spectral radius {0} is marginal (within 1e-9 of the unit circle); no verdict")]
    Marginal(f64),
    #[error("system not IU; no attack sensor set")]
    NotIncrementallyUnstable,
    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),
    #[error("virtual trajectory drifted from its recursion at step {step} (discrepancy {discrepancy:e})")]
    Consistency { step: usize, discrepancy: f64 },
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }

    /// True for errors caused by invalid user input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::Config(_)
                | Error::InsufficientCalibration { .. }
                | Error::InsufficientSamples { .. }
                | Error::Unsupported(_)
        )
    }
}
