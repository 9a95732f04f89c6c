//! Error type shared by the analytical and simulation layers.

use thiserror::Error;

/// Errors surfaced by model operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// The closed forms of the contact/queue model require
    /// `nu*omega + nu*xi - lambda*omega > 0` and `lambda < nu`.
    #[error(
        "unstable rate tuple (lambda={lambda}, nu={nu}, xi={xi}, omega={omega}): \
         closed forms require lambda < nu and nu*omega + nu*xi - lambda*omega > 0"
    )]
    StabilityViolation {
        lambda: f64,
        nu: f64,
        xi: f64,
        omega: f64,
    },

    /// An argument fell outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two vectors that must agree in length did not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// The truncated chain left too much probability mass at the boundary.
    #[error("truncation at j_max={j_max} leaves boundary mass {tail:.3e} (limit {limit:.1e})")]
    TruncationInsufficient { j_max: usize, tail: f64, limit: f64 },

    /// The stationary linear system could not be solved.
    #[error("singular linear system in stationary solve")]
    SingularSystem,

    /// A D2D link was requested outside the unit-disk communication range.
    #[error("vehicle {vehicle} out of D2D range of user {user}: {distance_m:.1} m > {range_m:.1} m")]
    OutOfRange {
        vehicle: usize,
        user: usize,
        distance_m: f64,
        range_m: f64,
    },

    /// A slot snapshot component required by the optimizer was absent.
    #[error("missing slot state: {0}")]
    MissingState(&'static str),

    /// The per-vehicle cache capacity is not positive.
    #[error("infeasible cache capacity: {0} bits")]
    InfeasibleCapacity(f64),

    /// The ratio-minimization iteration failed to meet its tolerance.
    #[error("no convergence after {max_iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        max_iterations: usize,
        residual: f64,
    },

    /// A scenario configuration violated one of its invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
