//! Finite-difference and rollout oracles for the horizon cost and its
//! derivatives on the benchmark problem.

use cmpc_core::benchmark::{build_benchmark, initial_conditions, softplus_shifted, BenchmarkPlant};
use cmpc_core::linalg::symmetrize;
use cmpc_core::Plant;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vec_in(len: usize, lim: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-lim..lim, len).prop_map(DVector::from_vec)
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

/// `∂V/∂U_j` by a fourth-order central difference of the cost.
fn gradient_oracle(u: &DVector<f64>, x: &DVector<f64>, t: f64) -> DVector<f64> {
    let spec = build_benchmark().spec;
    let v = |u: &DVector<f64>| spec.cost(u, x, t).unwrap();
    DVector::from_fn(u.len(), |j, _| {
        let h = 1e-3;
        let mut p = u.clone();
        let mut at = |d: f64| {
            p[j] = u[j] + d;
            v(&p)
        };
        (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjoint_gradient_matches_cost_differences(
        u in vec_in(6, 1.0), x in vec_in(4, 2.0), t in 0.0..4.0f64
    ) {
        let spec = build_benchmark().spec;
        let zeta = spec.zeta(&u, &x, t).unwrap();
        let oracle = gradient_oracle(&u, &x, t);
        let err = (&zeta - &oracle).norm() / oracle.norm().max(1.0);
        prop_assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn hessian_matches_gradient_oracle_differences(
        u in vec_in(6, 1.0), x in vec_in(4, 2.0), t in 0.0..4.0f64
    ) {
        let spec = build_benchmark().spec;
        let h = spec.hessian(&u, &x, t).unwrap();
        let step = 1e-3;
        let mut oracle = DMatrix::zeros(6, 6);
        for j in 0..6 {
            let mut p = u.clone();
            p[j] += step;
            let plus = gradient_oracle(&p, &x, t);
            p[j] -= 2.0 * step;
            let minus = gradient_oracle(&p, &x, t);
            oracle.set_column(j, &((plus - minus) / (2.0 * step)));
        }
        prop_assert!(rel_err(&h, &symmetrize(&oracle)) <= 1e-5);
    }

    #[test]
    fn state_and_time_jacobians_match_oracle(
        u in vec_in(6, 1.0), x in vec_in(4, 2.0), t in 0.0..4.0f64
    ) {
        let spec = build_benchmark().spec;
        let zx = spec.zeta_x(&u, &x, t).unwrap();
        let step = 1e-3;
        let mut oracle = DMatrix::zeros(6, 4);
        for j in 0..4 {
            let mut p = x.clone();
            p[j] += step;
            let plus = gradient_oracle(&u, &p, t);
            p[j] -= 2.0 * step;
            let minus = gradient_oracle(&u, &p, t);
            oracle.set_column(j, &((plus - minus) / (2.0 * step)));
        }
        prop_assert!(rel_err(&zx, &oracle) <= 1e-5);

        let zt = spec.zeta_t(&u, &x, t).unwrap();
        let ot = (gradient_oracle(&u, &x, t + step) - gradient_oracle(&u, &x, t - step)) / (2.0 * step);
        prop_assert!((&zt - &ot).norm() / ot.norm().max(1e-3) <= 1e-5);
    }

    #[test]
    fn plant_jacobians_match_differences(
        u in vec_in(2, 1.0), x in vec_in(4, 3.0), t in 0.0..10.0f64
    ) {
        let plant = BenchmarkPlant;
        let step = 1e-6;
        let mut fx = DMatrix::zeros(4, 4);
        for j in 0..4 {
            let mut p = x.clone();
            p[j] += step;
            let plus = plant.f(&p, &u, t);
            p[j] -= 2.0 * step;
            fx.set_column(j, &((plus - plant.f(&p, &u, t)) / (2.0 * step)));
        }
        prop_assert!(rel_err(&plant.fx(&x, &u, t), &fx) <= 1e-5);
        let mut fu = DMatrix::zeros(4, 2);
        for j in 0..2 {
            let mut p = u.clone();
            p[j] += step;
            let plus = plant.f(&x, &p, t);
            p[j] -= 2.0 * step;
            fu.set_column(j, &((plus - plant.f(&x, &p, t)) / (2.0 * step)));
        }
        prop_assert!(rel_err(&plant.fu(&x, &u, t), &fu) <= 1e-5);
    }

    #[test]
    fn raw_hessian_is_nearly_symmetric(
        u in vec_in(6, 1.0), x in vec_in(4, 2.0), t in 0.0..4.0f64
    ) {
        let spec = build_benchmark().spec;
        let raw = spec.raw_hessian(&u, &x, t).unwrap();
        let asym = (&raw - raw.transpose()).norm() / raw.norm();
        prop_assert!(asym <= 1e-8, "asymmetry {asym}");
        let h = spec.hessian(&u, &x, t).unwrap();
        prop_assert_eq!(&h, &h.transpose());
    }

    #[test]
    fn negative_residual_is_a_descent_direction(
        u in vec_in(6, 1.0), x in vec_in(4, 2.0), t in 0.0..4.0f64
    ) {
        let spec = build_benchmark().spec;
        let zeta = spec.zeta(&u, &x, t).unwrap();
        prop_assume!(zeta.norm() > 1e-6);
        let v0 = spec.cost(&u, &x, t).unwrap();
        let v1 = spec.cost(&(&u - &zeta * 1e-3), &x, t).unwrap();
        prop_assert!(v1 < v0);
    }
}

#[test]
fn cost_matches_independent_rollout_at_first_initial_condition() {
    // Written out directly from the model: Euler with Δt = 0.5 over h = 3
    // steps, ℓ = 0.5‖x‖² + ‖u‖², Φ = ‖x‖².
    let spec = build_benchmark().spec;
    let s = &initial_conditions()[0];
    let u = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.4, -0.5, 0.05]);
    let t0 = 0.7_f64;
    let dt = 0.5;
    let mut x = [1.5_f64, 1.5, -1.5, -1.5];
    let mut v = 0.0;
    for k in 0..3 {
        let t = t0 + k as f64 * dt;
        let (cs, sn) = ((2.0 * t / std::f64::consts::PI).cos(), (2.0 * t / std::f64::consts::PI).sin());
        let (u1, u2) = (u[2 * k], u[2 * k + 1]);
        v += 0.5 * x.iter().map(|a| a * a).sum::<f64>() + u1 * u1 + u2 * u2;
        let f = [
            -0.5 * x[0] + u1,
            x[0] + (-1.0 + cs / 2.0) * x[1] + 0.2 * ((x[0].exp() + 1.0).ln() - 2f64.ln()) + 0.3 * cs,
            x[1] + (-1.0 + cs / 2.0) * x[2] + u2,
            x[2] + (-1.0 + sn / 2.0) * x[3] + 0.2 * ((x[2].exp() + 1.0).ln() - 2f64.ln()) + 0.3 * cs,
        ];
        for i in 0..4 {
            x[i] += f[i] * dt;
        }
    }
    v += x.iter().map(|a| a * a).sum::<f64>();
    let got = spec.cost(&u, &s.x, t0).unwrap();
    assert!((got - v).abs() <= 1e-12 * v, "{got} vs {v}");
    assert!((softplus_shifted(1.5) - ((1.5f64.exp() + 1.0).ln() - 2f64.ln())).abs() < 1e-15);
}
