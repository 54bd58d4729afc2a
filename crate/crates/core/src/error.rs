use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong while validating, solving, simulating or
/// verifying a game.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("impact admissibility violated at t = {t}: alpha_t * exp(-rho) + beta_t = {value} is not < 1")]
    Assumption32Violated { t: usize, value: f64 },
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("{field} has length {found}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{field} is out of range: {reason}")]
    OutOfRange {
        field: &'static str,
        reason: &'static str,
    },
    #[error("time {t} is outside 1..={max}")]
    TimeOutOfRange { t: usize, max: usize },
    #[error("effective covariance is not positive definite (objective unbounded)")]
    NotPositiveDefinite,
    #[error("trader {trader}'s expected utility is unbounded at t = {t} (tilted covariance not positive definite)")]
    UnboundedObjective { t: usize, trader: usize },
    #[error("stage objective of trader {trader} is not strictly concave at t = {t} (A = {a})")]
    ConcavityLost { t: usize, trader: usize, a: f64 },
    #[error("best-response system is singular at t = {t}")]
    SingularEquilibrium { t: usize },
    #[error("path {path}: trader {trader} ends with non-zero inventory {residual}")]
    InventoryLeak {
        path: usize,
        trader: usize,
        residual: f64,
    },
    #[error("cannot summarize an empty sample")]
    EmptySample,
    #[error("quadrature integrand is not integrable or overflows")]
    IntegrandOverflow,
    #[error("objective is not unimodal on the search bracket")]
    BracketFailure,
    #[error("best-response iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}

impl Error {
    /// True for errors caused by an inadmissible configuration, as opposed to
    /// numerical breakdown during solving or verification.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Assumption32Violated { .. }
                | Error::NonPositive { .. }
                | Error::LengthMismatch { .. }
                | Error::OutOfRange { .. }
        )
    }
}
