//! Continuation-method update `U̇ = H⁻¹b` and the closed loop `ṡ = φ(s, t)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrate::{rk4, step_count};
use crate::linalg::spd_solve_vec;
use crate::ocp::{OcpSpec, ZetaDerivatives};
use crate::plant::Plant;
use crate::trajectory::{Sample, TrajectoryRecord};

/// Designed dynamics `ż = η(z, t)` imposed on the residual `z = ζ`.
pub trait VirtualDynamics: Send + Sync {
    fn eta(&self, z: &DVector<f64>, t: f64) -> DVector<f64>;
    fn jacobian(&self, z: &DVector<f64>, t: f64) -> DMatrix<f64>;
    /// Whether `η(0, t) = 0` for every `t`.
    fn fixes_origin(&self) -> bool {
        false
    }
}

/// `η(z) = −c·z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDecay {
    pub rate: f64,
}

impl Default for LinearDecay {
    fn default() -> Self {
        Self { rate: 1.0 }
    }
}

impl VirtualDynamics for LinearDecay {
    fn eta(&self, z: &DVector<f64>, _t: f64) -> DVector<f64> {
        z * -self.rate
    }

    fn jacobian(&self, z: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(z.len(), z.len()) * -self.rate
    }

    fn fixes_origin(&self) -> bool {
        true
    }
}

/// Componentwise `η_i(z) = −a·z_i − b·z_i³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicDecay {
    pub linear: f64,
    pub cubic: f64,
}

impl VirtualDynamics for CubicDecay {
    fn eta(&self, z: &DVector<f64>, _t: f64) -> DVector<f64> {
        z.map(|zi| -self.linear * zi - self.cubic * zi * zi * zi)
    }

    fn jacobian(&self, z: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&z.map(|zi| -self.linear - 3.0 * self.cubic * zi * zi))
    }

    fn fixes_origin(&self) -> bool {
        true
    }
}

/// Closed-loop state `s = [x; U]` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
}

impl AugmentedState {
    pub fn new(t: f64, x: DVector<f64>, u: DVector<f64>) -> Self {
        Self { t, x, u }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut s = DVector::zeros(n + self.u.len());
        s.rows_mut(0, n).copy_from(&self.x);
        s.rows_mut(n, self.u.len()).copy_from(&self.u);
        s
    }

    pub fn from_vector(s: &DVector<f64>, n: usize, t: f64) -> Self {
        Self {
            t,
            x: s.rows(0, n).into_owned(),
            u: s.rows(n, s.len() - n).into_owned(),
        }
    }
}

/// The plant, the OCP and the virtual dynamics wired into one closed loop.
#[derive(Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub plant: &'a dyn Plant,
    pub spec: &'a OcpSpec,
    pub virtual_dynamics: &'a dyn VirtualDynamics,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        plant: &'a dyn Plant,
        spec: &'a OcpSpec,
        virtual_dynamics: &'a dyn VirtualDynamics,
    ) -> Self {
        Self {
            plant,
            spec,
            virtual_dynamics,
        }
    }

    fn b_from(&self, d: &ZetaDerivatives, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> DVector<f64> {
        let f = self.plant.f(x, &self.spec.first_input(u), t);
        self.virtual_dynamics.eta(&d.zeta, t) - &d.zeta_x * f - &d.zeta_t
    }

    /// `b = η(ζ, t) − (∂ζ/∂x)·f(x, Π₀U, t) − ∂ζ/∂t`.
    pub fn b_vector(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let zeta = self.spec.zeta(u, x, t)?;
        let zeta_x = self.spec.zeta_x(u, x, t)?;
        let zeta_t = self.spec.zeta_t(u, x, t)?;
        let f = self.plant.f(x, &self.spec.first_input(u), t);
        Ok(self.virtual_dynamics.eta(&zeta, t) - zeta_x * f - zeta_t)
    }

    /// Solves `H·U̇ = b` by Cholesky.
    pub fn u_dot(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let d = self.spec.derivatives(u, x, t)?;
        spd_solve_vec(&d.h, &self.b_from(&d, u, x, t), t)
    }

    /// `φ(s, t) = [f(x, Π₀U, t); H⁻¹b]`.
    pub fn rhs(&self, s: &AugmentedState) -> Result<DVector<f64>> {
        let n = s.x.len();
        let f = self.plant.f(&s.x, &self.spec.first_input(&s.u), s.t);
        let udot = self.u_dot(&s.u, &s.x, s.t)?;
        let mut out = DVector::zeros(n + udot.len());
        out.rows_mut(0, n).copy_from(&f);
        out.rows_mut(n, udot.len()).copy_from(&udot);
        Ok(out)
    }

    /// `φ` on the stacked vector `s = [x; U]`.
    pub fn rhs_vector(&self, s: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.rhs(&AugmentedState::from_vector(s, self.spec.state_dim(), t))
    }

    fn check_state(&self, s: &AugmentedState) -> Result<()> {
        if s.x.len() != self.spec.state_dim() {
            return Err(Error::Dimension {
                what: "state",
                expected: self.spec.state_dim(),
                got: s.x.len(),
            });
        }
        if s.u.len() != self.spec.design_dim() {
            return Err(Error::Dimension {
                what: "design vector",
                expected: self.spec.design_dim(),
                got: s.u.len(),
            });
        }
        Ok(())
    }

    /// Integrates the closed loop with fixed-step RK4 and hands every state
    /// `s_k = s(t0 + kτ)` to `observe`.
    pub fn integrate<O>(&self, s0: &AugmentedState, t_end: f64, tau: f64, observe: O) -> Result<DVector<f64>>
    where
        O: FnMut(usize, f64, &DVector<f64>) -> Result<()>,
    {
        self.check_state(s0)?;
        let steps = step_count(s0.t, t_end, tau)?;
        rk4(
            |s, t| self.rhs_vector(s, t),
            s0.to_vector(),
            s0.t,
            tau,
            steps,
            observe,
        )
    }

    /// Simulates `ṡ = φ(s, t)` and records `(t, x, Π₀U, ‖ζ‖, V)` at every step.
    pub fn simulate(&self, s0: &AugmentedState, t_end: f64, tau: f64) -> Result<TrajectoryRecord> {
        let n = self.spec.state_dim();
        let mut record = TrajectoryRecord::new(tau);
        self.integrate(s0, t_end, tau, |_, t, s| {
            let st = AugmentedState::from_vector(s, n, t);
            record.samples.push(self.sample(&st.u, &st.x, t)?);
            Ok(())
        })?;
        Ok(record)
    }

    pub(crate) fn sample(&self, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<Sample> {
        Ok(Sample {
            t,
            x: x.iter().copied().collect(),
            u: self.spec.first_input(u).iter().copied().collect(),
            zeta_norm: self.spec.zeta(u, x, t)?.norm(),
            cost: self.spec.cost(u, x, t)?,
        })
    }
}
