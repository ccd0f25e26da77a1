//! Fixed-step classical Runge–Kutta.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::all_finite;

/// Number of fixed steps of size `tau` covering `[t0, t_end]`.
pub fn step_count(t0: f64, t_end: f64, tau: f64) -> Result<usize> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("integrator step must be positive, got {tau}")));
    }
    if !(t_end > t0) {
        return Err(Error::Config(format!(
            "end time {t_end} must exceed start time {t0}"
        )));
    }
    Ok(((t_end - t0) / tau).round().max(1.0) as usize)
}

/// One RK4 step of `ẏ = rhs(y, t)`.
pub fn rk4_step<F>(rhs: &mut F, y: &DVector<f64>, t: f64, tau: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    let half = 0.5 * tau;
    let k1 = rhs(y, t)?;
    let k2 = rhs(&(y + &k1 * half), t + half)?;
    let k3 = rhs(&(y + &k2 * half), t + half)?;
    let k4 = rhs(&(y + &k3 * tau), t + tau)?;
    Ok(y + (k1 + (k2 + k3) * 2.0 + k4) * (tau / 6.0))
}

/// Integrates `steps` RK4 steps from `(y0, t0)`, calling `observe(k, t_k, y_k)`
/// for `k = 0..=steps`. Returns the final state.
pub fn rk4<F, O>(
    mut rhs: F,
    y0: DVector<f64>,
    t0: f64,
    tau: f64,
    steps: usize,
    mut observe: O,
) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
    O: FnMut(usize, f64, &DVector<f64>) -> Result<()>,
{
    let mut y = y0;
    observe(0, t0, &y)?;
    for k in 0..steps {
        let t = t0 + k as f64 * tau;
        y = rk4_step(&mut rhs, &y, t, tau)?;
        let t_next = t0 + (k + 1) as f64 * tau;
        if !all_finite(&y) {
            return Err(Error::Divergence { t: t_next });
        }
        observe(k + 1, t_next, &y)?;
    }
    Ok(y)
}
