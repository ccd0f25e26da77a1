//! Continuous-time plant models `ẋ = f(x, u, t)`.

use nalgebra::{DMatrix, DVector};

/// A controlled plant together with its Jacobians.
///
/// Implementations are expected to be pure: the same arguments always give
/// the same values, so a plant can be shared across worker threads.
pub trait Plant: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn f(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64>;

    /// `∂f/∂x`, an `n × n` matrix.
    fn fx(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64>;

    /// `∂f/∂u`, an `n × m` matrix.
    fn fu(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64>;
}
