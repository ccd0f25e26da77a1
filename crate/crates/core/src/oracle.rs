//! Optimal design `U*(x, t)` by damped Newton on `ζ = 0`, its sensitivity
//! `∂U*/∂x`, and the optimally controlled trajectory.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrate::{rk4, step_count};
use crate::linalg::{min_eigenvalue, spd_solve};
use crate::ocp::OcpSpec;
use crate::plant::Plant;
use crate::trajectory::{Sample, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once `‖ζ‖` is at or below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub u: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// `H` at the returned `u`; verified positive definite.
    pub hessian: DMatrix<f64>,
}

/// Solves `ζ(U, x, t) = 0` from `u_init` with default options.
pub fn solve_ustar(spec: &OcpSpec, x: &DVector<f64>, t: f64, u_init: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(solve_ustar_with(spec, x, t, u_init, &NewtonOptions::default())?.u)
}

/// Damped Newton: `U ← U − αH⁻¹ζ` with `α` halved until `‖ζ‖` decreases.
///
/// `H` is factored at every iterate including the last one, so a flat cost
/// (for which any `U` is stationary) is still reported as an
/// [`Error::AssumptionViolation`].
pub fn solve_ustar_with(
    spec: &OcpSpec,
    x: &DVector<f64>,
    t: f64,
    u_init: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    let mut u = u_init.clone();
    let mut zeta = spec.zeta(&u, x, t)?;
    let mut residual = zeta.norm();
    let mut iterations = 0;
    loop {
        let hessian = spec.hessian(&u, x, t)?;
        let chol = hessian.clone().cholesky().ok_or_else(|| Error::AssumptionViolation {
            min_eigenvalue: min_eigenvalue(&hessian),
            t,
        })?;
        if residual <= opts.tolerance {
            return Ok(NewtonSolution {
                u,
                iterations,
                residual,
                hessian,
            });
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;
        let direction = chol.solve(&zeta);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = &u - &direction * alpha;
            if let Ok(z) = spec.zeta(&trial, x, t) {
                let r = z.norm();
                if r < residual {
                    u = trial;
                    zeta = z;
                    residual = r;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations,
        residual,
        t,
    })
}

/// `∂U*/∂x = −H⁻¹ ∂ζ/∂x` at an already solved `U*`.
pub fn sensitivity_at(spec: &OcpSpec, ustar: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    let h = spec.hessian(ustar, x, t)?;
    sensitivity_with_hessian(spec, &h, ustar, x, t)
}

pub(crate) fn sensitivity_with_hessian(
    spec: &OcpSpec,
    h: &DMatrix<f64>,
    ustar: &DVector<f64>,
    x: &DVector<f64>,
    t: f64,
) -> Result<DMatrix<f64>> {
    let zeta_x = spec.zeta_x(ustar, x, t)?;
    Ok(-spd_solve(h, &zeta_x, t)?)
}

/// Solves for `U*(x, t)` and returns it with `∂U*/∂x`.
pub fn ustar_sensitivity(
    spec: &OcpSpec,
    x: &DVector<f64>,
    t: f64,
    u_init: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sol = solve_ustar_with(spec, x, t, u_init, &NewtonOptions::default())?;
    let sens = sensitivity_with_hessian(spec, &sol.hessian, &sol.u, x, t)?;
    Ok((sol.u, sens))
}

/// RK4 on `ẋ* = f(x*, Π₀U*(x*, t), t)`, re-solving `U*` at every stage with
/// the previous solution as warm start.
pub fn simulate_optimal(
    plant: &dyn Plant,
    spec: &OcpSpec,
    x0: &DVector<f64>,
    t0: f64,
    t_end: f64,
    tau: f64,
) -> Result<TrajectoryRecord> {
    let steps = step_count(t0, t_end, tau)?;
    let mut warm = DVector::zeros(spec.design_dim());
    let mut record = TrajectoryRecord::new(tau);
    // The observer runs after the stage evaluations, so it keeps its own chain.
    let mut sample_warm = DVector::zeros(spec.design_dim());
    rk4(
        |x, t| {
            let ustar = solve_ustar(spec, x, t, &warm)?;
            let f = plant.f(x, &spec.first_input(&ustar), t);
            warm = ustar;
            Ok(f)
        },
        x0.clone(),
        t0,
        tau,
        steps,
        |_, t, x| {
            let ustar = solve_ustar(spec, x, t, &sample_warm)?;
            record.samples.push(Sample {
                t,
                x: x.iter().copied().collect(),
                u: spec.first_input(&ustar).iter().copied().collect(),
                zeta_norm: spec.zeta(&ustar, x, t)?.norm(),
                cost: spec.cost(&ustar, x, t)?,
            });
            sample_warm = ustar;
            Ok(())
        },
    )?;
    Ok(record)
}
