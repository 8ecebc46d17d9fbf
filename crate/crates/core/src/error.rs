use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The dual metric was not positive definite (or not finite) at a point.
    #[error("metric error at x = {x:?}, theta = {theta:?}: {reason}")]
    Metric {
        x: Vec<f64>,
        theta: Vec<f64>,
        reason: String,
    },

    #[error("geodesic optimizer diverged after {iterations} iterations: {reason}")]
    OptimizerDiverged { iterations: usize, reason: String },

    /// The energy-decrease constraint has no feasible input: `b < 0` while the
    /// constraint normal vanishes.
    #[error("infeasible min-norm constraint: |a| = {a_norm:e}, b = {b:e}")]
    InfeasibleConstraint { a_norm: f64, b: f64 },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("expression error: {0}")]
    Expression(String),
}

impl Error {
    pub(crate) fn metric(x: &[f64], theta: &[f64], reason: impl Into<String>) -> Self {
        Error::Metric {
            x: x.to_vec(),
            theta: theta.to_vec(),
            reason: reason.into(),
        }
    }
}
