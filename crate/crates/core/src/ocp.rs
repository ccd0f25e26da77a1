//! Discrete-horizon optimal control problem: horizon cost `V`, optimality
//! residual `ζ = ∇_U V` and the Jacobians of `ζ`.
//!
//! The design vector `U = [u⁰; …; u^{h-1}]` is a plain `DVector` of length
//! `h·m` whose block `k` holds the input applied on `[t^k, t^{k+1})`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, fd_step, min_eigenvalue, symmetrize};
use crate::plant::Plant;

/// Discrete map `x^{k+1} = f_d(x^k, u^k, t^k)`.
pub trait DiscreteDynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64>;
    /// `(∂f_d/∂x, ∂f_d/∂u)`.
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64)
        -> (DMatrix<f64>, DMatrix<f64>);
}

/// Forward-Euler discretization `f_d(x, u, t) = x + f(x, u, t)·Δt`.
pub struct EulerDiscretization {
    plant: Arc<dyn Plant>,
    dt: f64,
}

impl EulerDiscretization {
    pub fn new(plant: Arc<dyn Plant>, dt: f64) -> Self {
        Self { plant, dt }
    }
}

impl DiscreteDynamics for EulerDiscretization {
    fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut next = self.plant.f(x, u, t);
        for (xn, xi) in next.iter_mut().zip(x.iter()) {
            *xn = xi + *xn * self.dt;
        }
        next
    }

    fn jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut ax = self.plant.fx(x, u, t) * self.dt;
        for i in 0..ax.nrows() {
            ax[(i, i)] += 1.0;
        }
        (ax, self.plant.fu(x, u, t) * self.dt)
    }
}

/// Stage cost `ℓ(x, u, t)` and terminal cost `Φ(x, t)` with their gradients.
pub trait CostModel: Send + Sync {
    fn stage(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64;
    /// `(∇_x ℓ, ∇_u ℓ)`.
    fn stage_gradients(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
    ) -> (DVector<f64>, DVector<f64>);
    fn terminal(&self, x: &DVector<f64>, t: f64) -> f64;
    fn terminal_gradient(&self, x: &DVector<f64>, t: f64) -> DVector<f64>;
}

/// `ℓ = a‖x‖² + b‖u‖²`, `Φ = c‖x‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost {
    pub state_weight: f64,
    pub input_weight: f64,
    pub terminal_weight: f64,
}

impl CostModel for QuadraticCost {
    fn stage(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> f64 {
        self.state_weight * x.norm_squared() + self.input_weight * u.norm_squared()
    }

    fn stage_gradients(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _t: f64,
    ) -> (DVector<f64>, DVector<f64>) {
        (x * (2.0 * self.state_weight), u * (2.0 * self.input_weight))
    }

    fn terminal(&self, x: &DVector<f64>, _t: f64) -> f64 {
        self.terminal_weight * x.norm_squared()
    }

    fn terminal_gradient(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        x * (2.0 * self.terminal_weight)
    }
}

pub type HessianFn = dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;

/// `ζ` together with `H = ∂ζ/∂U`, `∂ζ/∂x` and `∂ζ/∂t` at one point.
#[derive(Debug, Clone)]
pub struct ZetaDerivatives {
    pub zeta: DVector<f64>,
    pub h: DMatrix<f64>,
    pub zeta_x: DMatrix<f64>,
    pub zeta_t: DVector<f64>,
}

impl ZetaDerivatives {
    /// `∂ζ/∂s = [∂ζ/∂x  H]` for `s = [x; U]`.
    pub fn zeta_s(&self) -> DMatrix<f64> {
        let hm = self.h.nrows();
        let n = self.zeta_x.ncols();
        let mut out = DMatrix::zeros(hm, n + hm);
        out.view_mut((0, 0), (hm, n)).copy_from(&self.zeta_x);
        out.view_mut((0, n), (hm, hm)).copy_from(&self.h);
        out
    }
}

/// The optimal control problem over a horizon of `h` steps of length `Δt`.
#[derive(Clone)]
pub struct OcpSpec {
    horizon: usize,
    dt: f64,
    dynamics: Arc<dyn DiscreteDynamics>,
    cost: Arc<dyn CostModel>,
    exact_hessian: Option<Arc<HessianFn>>,
    fd_step: f64,
}

impl fmt::Debug for OcpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcpSpec")
            .field("horizon", &self.horizon)
            .field("dt", &self.dt)
            .field("state_dim", &self.state_dim())
            .field("input_dim", &self.input_dim())
            .field("exact_hessian", &self.exact_hessian.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

impl OcpSpec {
    pub fn new(
        horizon: usize,
        dt: f64,
        dynamics: Arc<dyn DiscreteDynamics>,
        cost: Arc<dyn CostModel>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            horizon,
            dt,
            dynamics,
            cost,
            exact_hessian: None,
            fd_step: DEFAULT_FD_STEP,
        })
    }

    /// Forward-Euler discretization of `plant` on the grid `t^k = t + kΔt`.
    pub fn euler(
        plant: Arc<dyn Plant>,
        horizon: usize,
        dt: f64,
        cost: Arc<dyn CostModel>,
    ) -> Result<Self> {
        Self::new(
            horizon,
            dt,
            Arc::new(EulerDiscretization::new(plant, dt)),
            cost,
        )
    }

    /// Replaces the finite-difference Hessian with an exact one.
    pub fn with_exact_hessian(mut self, hessian: Arc<HessianFn>) -> Self {
        self.exact_hessian = Some(hessian);
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn fd_step_size(&self) -> f64 {
        self.fd_step
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }

    /// Length of the design vector, `h·m`.
    pub fn design_dim(&self) -> usize {
        self.horizon * self.input_dim()
    }

    pub fn dynamics(&self) -> &dyn DiscreteDynamics {
        self.dynamics.as_ref()
    }

    pub fn cost_model(&self) -> &dyn CostModel {
        self.cost.as_ref()
    }

    pub fn time_at(&self, t: f64, k: usize) -> f64 {
        t + k as f64 * self.dt
    }

    /// Block `k` of the design vector.
    pub fn input_block(&self, u: &DVector<f64>, k: usize) -> DVector<f64> {
        let m = self.input_dim();
        u.rows(k * m, m).into_owned()
    }

    /// `Π₀U`, the input applied now.
    pub fn first_input(&self, u: &DVector<f64>) -> DVector<f64> {
        self.input_block(u, 0)
    }

    /// The projection matrix `Π₀ = [I_m 0 ⋯ 0]`.
    pub fn pi0(&self) -> DMatrix<f64> {
        let m = self.input_dim();
        let mut p = DMatrix::zeros(m, self.design_dim());
        for i in 0..m {
            p[(i, i)] = 1.0;
        }
        p
    }

    fn check_dims(&self, u: &DVector<f64>, x: &DVector<f64>) -> Result<()> {
        if u.len() != self.design_dim() {
            return Err(Error::Dimension {
                what: "design vector",
                expected: self.design_dim(),
                got: u.len(),
            });
        }
        if x.len() != self.state_dim() {
            return Err(Error::Dimension {
                what: "state",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// States `x⁰ … x^h` of the horizon rollout from `x⁰ = x`.
    pub fn rollout(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<Vec<DVector<f64>>> {
        self.check_dims(u, x)?;
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(x.clone());
        for k in 0..self.horizon {
            let next = self
                .dynamics
                .step(&states[k], &self.input_block(u, k), self.time_at(t, k));
            if !all_finite(&next) {
                return Err(Error::RolloutDivergence { step: k + 1 });
            }
            states.push(next);
        }
        Ok(states)
    }

    /// `V(U, x, t) = Φ(x^h, t^h) + Σ_k ℓ(x^k, u^k, t^k)`.
    pub fn cost(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<f64> {
        let states = self.rollout(u, x, t)?;
        let mut v = self
            .cost
            .terminal(&states[self.horizon], self.time_at(t, self.horizon));
        for (k, xk) in states.iter().take(self.horizon).enumerate() {
            v += self.cost.stage(xk, &self.input_block(u, k), self.time_at(t, k));
        }
        Ok(v)
    }

    /// `ζ = ∇_U V` by the discrete adjoint recursion.
    pub fn zeta(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let states = self.rollout(u, x, t)?;
        let m = self.input_dim();
        let h = self.horizon;
        let mut lambda = self
            .cost
            .terminal_gradient(&states[h], self.time_at(t, h));
        let mut zeta = DVector::zeros(h * m);
        for k in (0..h).rev() {
            let tk = self.time_at(t, k);
            let uk = self.input_block(u, k);
            let (ax, bu) = self.dynamics.jacobians(&states[k], &uk, tk);
            let (lx, lu) = self.cost.stage_gradients(&states[k], &uk, tk);
            let block = lu + bu.tr_mul(&lambda);
            zeta.rows_mut(k * m, m).copy_from(&block);
            lambda = lx + ax.tr_mul(&lambda);
        }
        Ok(zeta)
    }

    /// Central-difference Jacobian `∂ζ/∂U` before symmetrization.
    pub fn raw_hessian(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let dim = self.design_dim();
        let mut jac = DMatrix::zeros(dim, dim);
        let mut probe = u.clone();
        for j in 0..dim {
            let step = fd_step(self.fd_step, u[j]);
            probe[j] = u[j] + step;
            let plus = self.zeta(&probe, x, t)?;
            probe[j] = u[j] - step;
            let minus = self.zeta(&probe, x, t)?;
            probe[j] = u[j];
            jac.set_column(j, &((plus - minus) / (2.0 * step)));
        }
        Ok(jac)
    }

    /// `H = ∂ζ/∂U`, symmetrized. Uses the exact Hessian when one was supplied.
    pub fn hessian(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        if let Some(exact) = &self.exact_hessian {
            self.check_dims(u, x)?;
            return Ok(symmetrize(&exact(u, x, t)));
        }
        Ok(symmetrize(&self.raw_hessian(u, x, t)?))
    }

    /// `H` with a positive-definiteness check.
    pub fn hessian_checked(
        &self,
        u: &DVector<f64>,
        x: &DVector<f64>,
        t: f64,
    ) -> Result<DMatrix<f64>> {
        let h = self.hessian(u, x, t)?;
        let lam = min_eigenvalue(&h);
        if !(lam > 0.0) {
            return Err(Error::AssumptionViolation {
                min_eigenvalue: lam,
                t,
            });
        }
        Ok(h)
    }

    /// `∂ζ/∂x`, an `hm × n` matrix.
    pub fn zeta_x(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        self.check_dims(u, x)?;
        let n = self.state_dim();
        let mut jac = DMatrix::zeros(self.design_dim(), n);
        let mut probe = x.clone();
        for j in 0..n {
            let step = fd_step(self.fd_step, x[j]);
            probe[j] = x[j] + step;
            let plus = self.zeta(u, &probe, t)?;
            probe[j] = x[j] - step;
            let minus = self.zeta(u, &probe, t)?;
            probe[j] = x[j];
            jac.set_column(j, &((plus - minus) / (2.0 * step)));
        }
        Ok(jac)
    }

    /// `∂ζ/∂t`.
    pub fn zeta_t(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let step = fd_step(self.fd_step, t);
        let plus = self.zeta(u, x, t + step)?;
        let minus = self.zeta(u, x, t - step)?;
        Ok((plus - minus) / (2.0 * step))
    }

    pub fn derivatives(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<ZetaDerivatives> {
        Ok(ZetaDerivatives {
            zeta: self.zeta(u, x, t)?,
            h: self.hessian(u, x, t)?,
            zeta_x: self.zeta_x(u, x, t)?,
            zeta_t: self.zeta_t(u, x, t)?,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// `ẋ = u` on a unit Euler step, so `f_d = x + u`.
    pub(crate) struct Integrator;

    impl Plant for Integrator {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn f(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
            u.clone()
        }
        fn fx(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn fu(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
            DMatrix::identity(1, 1)
        }
    }

    /// `ℓ = u²`, `Φ = x²`.
    pub(crate) fn lq_spec(horizon: usize) -> OcpSpec {
        OcpSpec::euler(
            Arc::new(Integrator),
            horizon,
            1.0,
            Arc::new(QuadraticCost {
                state_weight: 0.0,
                input_weight: 1.0,
                terminal_weight: 1.0,
            }),
        )
        .unwrap()
    }

    /// [`lq_spec`] with its closed-form Hessian `H = 2I + 2·11ᵀ`.
    pub(crate) fn lq_spec_exact(horizon: usize) -> OcpSpec {
        lq_spec(horizon).with_exact_hessian(Arc::new(move |_u, _x, _t| {
            DMatrix::identity(horizon, horizon) * 2.0 + DMatrix::from_element(horizon, horizon, 2.0)
        }))
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn rollout_lq() {
        let spec = lq_spec(2);
        let states = spec.rollout(&v(&[0.0, 0.0]), &v(&[1.0]), 0.0).unwrap();
        assert_eq!(states, vec![v(&[1.0]), v(&[1.0]), v(&[1.0])]);
        let states = spec.rollout(&v(&[1.0, -1.0]), &v(&[1.0]), 0.0).unwrap();
        assert_eq!(states, vec![v(&[1.0]), v(&[2.0]), v(&[1.0])]);
    }

    #[test]
    fn cost_lq() {
        let spec = lq_spec(2);
        assert_eq!(spec.cost(&v(&[0.0, 0.0]), &v(&[1.0]), 0.0).unwrap(), 1.0);
        assert_eq!(spec.cost(&v(&[1.0, -1.0]), &v(&[1.0]), 0.0).unwrap(), 3.0);
    }

    #[test]
    fn zeta_and_jacobians_lq() {
        let spec = lq_spec(2);
        let u = v(&[0.0, 0.0]);
        let x = v(&[1.0]);
        assert_eq!(spec.zeta(&u, &x, 0.0).unwrap(), v(&[2.0, 2.0]));
        let h = spec.hessian(&u, &x, 0.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 4.0]);
        assert!((h - expected).abs().max() < 1e-9);
        let zx = spec.zeta_x(&u, &x, 0.0).unwrap();
        assert!((zx - DMatrix::from_row_slice(2, 1, &[2.0, 2.0])).abs().max() < 1e-9);
        assert!(spec.zeta_t(&u, &x, 0.3).unwrap().amax() <= 1e-8);
    }

    #[test]
    fn dimension_errors() {
        let spec = lq_spec(2);
        let err = spec.zeta(&v(&[0.0]), &v(&[1.0]), 0.0).unwrap_err();
        assert_eq!(
            err,
            Error::Dimension {
                what: "design vector",
                expected: 2,
                got: 1
            }
        );
        assert!(spec.rollout(&v(&[0.0, 0.0]), &v(&[1.0, 2.0]), 0.0).is_err());
    }

    #[test]
    fn rollout_divergence_names_the_step() {
        let spec = lq_spec(3);
        let err = spec
            .rollout(&v(&[0.0, f64::INFINITY, 0.0]), &v(&[1.0]), 0.0)
            .unwrap_err();
        assert_eq!(err, Error::RolloutDivergence { step: 2 });
    }

    #[test]
    fn invalid_horizon_or_step() {
        let cost = Arc::new(QuadraticCost {
            state_weight: 0.0,
            input_weight: 1.0,
            terminal_weight: 1.0,
        });
        assert!(OcpSpec::euler(Arc::new(Integrator), 0, 1.0, cost.clone()).is_err());
        assert!(OcpSpec::euler(Arc::new(Integrator), 2, 0.0, cost).is_err());
    }

    #[test]
    fn degenerate_cost_fails_positive_definiteness() {
        let spec = OcpSpec::euler(
            Arc::new(Integrator),
            2,
            1.0,
            Arc::new(QuadraticCost {
                state_weight: 0.0,
                input_weight: 0.0,
                terminal_weight: 0.0,
            }),
        )
        .unwrap();
        let err = spec
            .hessian_checked(&v(&[0.0, 0.0]), &v(&[1.0]), 0.0)
            .unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation { min_eigenvalue, .. } if min_eigenvalue == 0.0));
    }

    #[test]
    fn exact_hessian_override_is_used() {
        let spec = lq_spec(2).with_exact_hessian(Arc::new(|_u, _x, _t| {
            DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 4.0])
        }));
        let h = spec.hessian(&v(&[0.3, 0.1]), &v(&[1.0]), 0.0).unwrap();
        assert_eq!(h[(0, 1)], 2.0);
        assert_eq!(h[(1, 1)], 4.0);
    }
}
