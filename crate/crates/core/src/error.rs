use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("rollout diverged at step {step}: non-finite state")]
    RolloutDivergence { step: usize },

    #[error("simulation diverged at t = {t}: non-finite state")]
    Divergence { t: f64 },

    /// The Hessian of the horizon cost is not positive definite.
    #[error("Hessian not positive definite at t = {t}: minimum eigenvalue {min_eigenvalue:e}")]
    AssumptionViolation { min_eigenvalue: f64, t: f64 },

    #[error("Newton iteration stalled after {iterations} iterations at t = {t} (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        t: f64,
    },

    #[error("mesh has {points} points, above the guard of {guard}")]
    MeshTooLarge { points: u128, guard: u64 },

    #[error("invalid mesh axis `{axis}`: {reason}")]
    InvalidAxis { axis: String, reason: String },

    #[error("differential Lyapunov function is not positive (V_delta = {value:e} at t = {t})")]
    MetricViolation { value: f64, t: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
