//! The 4-state time-varying benchmark plant with its horizon-3 OCP, cubic
//! virtual dynamics and the three reference initial conditions.

use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::continuation::{AugmentedState, CubicDecay};
use crate::ocp::{OcpSpec, QuadraticCost};
use crate::plant::Plant;

pub const PRESET_ID: &str = "paper-sec4";

pub const HORIZON: usize = 3;
pub const OCP_STEP: f64 = 0.5;

/// `log(exp(a) + 1) − log 2`, evaluated without overflow.
pub fn softplus_shifted(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p() - LN_2
}

/// Derivative of [`softplus_shifted`], the logistic function.
pub fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn cs(t: f64) -> f64 {
    (2.0 * t / PI).cos()
}

fn sn(t: f64) -> f64 {
    (2.0 * t / PI).sin()
}

/// `f(x, u, t) = A(t)x + Bu + r(x) + w(t)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BenchmarkPlant;

impl BenchmarkPlant {
    pub fn a_matrix(t: f64) -> DMatrix<f64> {
        let c = -1.0 + cs(t) / 2.0;
        let s = -1.0 + sn(t) / 2.0;
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            -0.5, 0.0, 0.0, 0.0,
            1.0,  c,   0.0, 0.0,
            0.0,  1.0, c,   0.0,
            0.0,  0.0, 1.0, s,
        ]);
        a
    }

    /// Columns `e₁` and `e₃` of `ℝ⁴`.
    pub fn b_matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    pub fn r(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            0.0,
            0.2 * softplus_shifted(x[0]),
            0.0,
            0.2 * softplus_shifted(x[2]),
        ])
    }

    pub fn w(t: f64) -> DVector<f64> {
        let c = 0.3 * cs(t);
        DVector::from_vec(vec![0.0, c, 0.0, c])
    }
}

impl Plant for BenchmarkPlant {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn f(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        let c = -1.0 + cs(t) / 2.0;
        let s = -1.0 + sn(t) / 2.0;
        let w = 0.3 * cs(t);
        DVector::from_vec(vec![
            -0.5 * x[0] + u[0],
            x[0] + c * x[1] + 0.2 * softplus_shifted(x[0]) + w,
            x[1] + c * x[2] + u[1],
            x[2] + s * x[3] + 0.2 * softplus_shifted(x[2]) + w,
        ])
    }

    fn fx(&self, x: &DVector<f64>, _u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let mut a = Self::a_matrix(t);
        a[(1, 0)] += 0.2 * logistic(x[0]);
        a[(3, 2)] += 0.2 * logistic(x[2]);
        a
    }

    fn fu(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        Self::b_matrix()
    }
}

/// The fully wired benchmark problem.
#[derive(Clone)]
pub struct BenchmarkProblem {
    pub plant: Arc<BenchmarkPlant>,
    pub spec: OcpSpec,
    pub virtual_dynamics: CubicDecay,
}

/// `ℓ = 0.5‖x‖² + ‖u‖²`, `Φ = ‖x‖²`.
pub const COST: QuadraticCost = QuadraticCost {
    state_weight: 0.5,
    input_weight: 1.0,
    terminal_weight: 1.0,
};

/// `η_i(z) = −0.2 z_i − 0.05 z_i³`.
pub const VIRTUAL_DYNAMICS: CubicDecay = CubicDecay {
    linear: 0.2,
    cubic: 0.05,
};

pub fn build_benchmark() -> BenchmarkProblem {
    let plant = Arc::new(BenchmarkPlant);
    let spec = OcpSpec::euler(plant.clone(), HORIZON, OCP_STEP, Arc::new(COST))
        .expect("benchmark horizon and step are valid");
    BenchmarkProblem {
        plant,
        spec,
        virtual_dynamics: VIRTUAL_DYNAMICS,
    }
}

/// The three reference starting points `s⁽ⁱ⁾(0)`, `i = 1, 2, 3`.
pub fn initial_conditions() -> [AugmentedState; 3] {
    let s = |x: [f64; 4], u: [f64; 6]| {
        AugmentedState::new(0.0, DVector::from_row_slice(&x), DVector::from_row_slice(&u))
    };
    [
        s([1.5, 1.5, -1.5, -1.5], [0.0; 6]),
        s([-1.5, -1.5, 1.5, 1.5], [-0.5, -0.5, 0.0, 0.0, 0.0, 0.0]),
        s([0.0; 4], [0.5, 0.5, 0.0, 0.0, 0.0, 0.0]),
    ]
}

/// Default simulation window for the closed-loop experiments.
pub const T_END: f64 = 5.0;
pub const TAU: f64 = 1e-3;
