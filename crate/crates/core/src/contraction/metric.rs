use nalgebra::{DMatrix, DVector};

use super::MetricConfig;
use crate::error::Result;
use crate::linalg::{spd_solve, symmetrize};
use crate::ocp::{OcpSpec, ZetaDerivatives};
use crate::oracle::{solve_ustar_with, sensitivity_with_hessian, NewtonOptions};
use crate::plant::Plant;

/// `M = blockdiag(P(x, t), 0) + κ (∂ζ/∂s)ᵀ Q(ζ, t) (∂ζ/∂s)`.
pub fn metric_m(cfg: &MetricConfig, spec: &OcpSpec, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    let d = ZetaDerivatives {
        zeta: spec.zeta(u, x, t)?,
        h: spec.hessian(u, x, t)?,
        zeta_x: spec.zeta_x(u, x, t)?,
        zeta_t: DVector::zeros(0),
    };
    Ok(metric_from_derivatives(cfg, &d, x, t))
}

/// [`metric_m`] from already evaluated `ζ`, `H` and `∂ζ/∂x`.
pub fn metric_from_derivatives(cfg: &MetricConfig, d: &ZetaDerivatives, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let n = x.len();
    let zeta_s = d.zeta_s();
    let q = cfg.q.eval(&d.zeta, t);
    let mut m = zeta_s.tr_mul(&(q * &zeta_s)) * cfg.kappa;
    let p = cfg.p.eval(x, t);
    let mut block = m.view_mut((0, 0), (n, n));
    block += p;
    symmetrize(&m)
}

/// `K = −H⁻¹(U) ∂ζ/∂x(U) − ∂U*/∂x` from its parts.
pub fn k_from_parts(
    h: &DMatrix<f64>,
    zeta_x: &DMatrix<f64>,
    ustar_sensitivity: &DMatrix<f64>,
    t: f64,
) -> Result<DMatrix<f64>> {
    Ok(-spd_solve(h, zeta_x, t)? - ustar_sensitivity)
}

/// Suboptimality matrix `K(U, x, t)`. The optimum is found by Newton from `U`.
pub fn k_matrix(spec: &OcpSpec, u: &DVector<f64>, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    let sol = solve_ustar_with(spec, x, t, u, &NewtonOptions::default())?;
    let sens = sensitivity_with_hessian(spec, &sol.hessian, &sol.u, x, t)?;
    let h = spec.hessian(u, x, t)?;
    let zeta_x = spec.zeta_x(u, x, t)?;
    k_from_parts(&h, &zeta_x, &sens, t)
}

/// `P_xU(x, u_r, t) = P(x, t)·∂f/∂u(x, Π₀U*(x, t) + u_r, t)·Π₀`.
pub fn p_xu_matrix(
    cfg: &MetricConfig,
    plant: &dyn Plant,
    spec: &OcpSpec,
    x: &DVector<f64>,
    u_r: &DVector<f64>,
    t: f64,
) -> Result<DMatrix<f64>> {
    let ustar = solve_ustar_with(
        spec,
        x,
        t,
        &DVector::zeros(spec.design_dim()),
        &NewtonOptions::default(),
    )?
    .u;
    let u = spec.first_input(&ustar) + u_r;
    Ok(cfg.p.eval(x, t) * plant.fu(x, &u, t) * spec.pi0())
}

/// `P̄_xU(x, u, t) = P_xU(x, u − Π₀U*(x, t), t)`.
///
/// The shift by `Π₀U*` cancels inside `∂f/∂u`, so this is
/// `P(x, t)·∂f/∂u(x, u, t)·Π₀` and needs no optimum.
pub fn p_xu_bar(
    cfg: &MetricConfig,
    plant: &dyn Plant,
    spec: &OcpSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    t: f64,
) -> DMatrix<f64> {
    cfg.p.eval(x, t) * plant.fu(x, u, t) * spec.pi0()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{build_benchmark, BenchmarkPlant};
    use crate::contraction::ConstantMetric;
    use crate::linalg::min_eigenvalue;
    use crate::ocp::tests::lq_spec;
    use crate::oracle::solve_ustar;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn vanishing_kappa_leaves_state_block() {
        let p = build_benchmark();
        let mut cfg = MetricConfig::benchmark();
        cfg.kappa = 0.0;
        let x = v(&[0.3, -0.2, 1.0, 0.5]);
        let m = metric_m(&cfg, &p.spec, &DVector::zeros(6), &x, 0.4).unwrap();
        let mut expected = DMatrix::zeros(10, 10);
        expected.view_mut((0, 0), (4, 4)).fill_with_identity();
        assert_eq!(m, expected);
    }

    #[test]
    fn benchmark_metric_positive_definite() {
        let p = build_benchmark();
        let cfg = MetricConfig::benchmark();
        for (x, u, t) in [
            (v(&[1.5, 1.5, -1.5, -1.5]), DVector::zeros(6), 0.0),
            (v(&[-2.0, 2.0, 0.0, 1.0]), DVector::from_element(6, 0.6), 2.0),
            (v(&[0.0; 4]), DVector::from_element(6, -0.6), 3.9),
        ] {
            let m = metric_m(&cfg, &p.spec, &u, &x, t).unwrap();
            assert!(min_eigenvalue(&m) > 0.0);
        }
    }

    #[test]
    fn metric_matches_raw_jacobian_product() {
        let p = build_benchmark();
        let mut cfg = MetricConfig::benchmark();
        cfg.kappa = 0.7;
        cfg.q = Arc::new(ConstantMetric::scaled_identity(6, 2.0));
        let x = v(&[0.3, -0.2, 1.0, 0.5]);
        let u = DVector::from_fn(6, |i, _| 0.1 * i as f64 - 0.2);
        let t = 1.3;
        // Independent ∂ζ/∂s: one-sided-free central differences over s = [x; U].
        let mut zs = DMatrix::zeros(6, 10);
        let h = 1e-6;
        for j in 0..10 {
            let (mut xp, mut xm, mut up, mut um) = (x.clone(), x.clone(), u.clone(), u.clone());
            if j < 4 {
                xp[j] += h;
                xm[j] -= h;
            } else {
                up[j - 4] += h;
                um[j - 4] -= h;
            }
            let col = (p.spec.zeta(&up, &xp, t).unwrap() - p.spec.zeta(&um, &xm, t).unwrap()) / (2.0 * h);
            zs.set_column(j, &col);
        }
        let mut expected = zs.transpose() * &zs * (0.7 * 2.0);
        for i in 0..4 {
            expected[(i, i)] += 1.0;
        }
        let m = metric_m(&cfg, &p.spec, &u, &x, t).unwrap();
        assert!((&m - &expected).amax() / expected.amax() <= 1e-6);
    }

    #[test]
    fn k_vanishes_for_lq_at_any_design() {
        let spec = lq_spec(2);
        let k = k_matrix(&spec, &v(&[0.9, -0.4]), &v(&[1.0]), 0.0).unwrap();
        assert!(k.amax() <= 1e-8);
    }

    #[test]
    fn k_vanishes_at_optimum_on_benchmark() {
        let p = build_benchmark();
        for (x, t) in [(v(&[1.5, 1.5, -1.5, -1.5]), 0.0), (v(&[-1.0, 0.4, 2.0, -0.3]), 2.2)] {
            let ustar = solve_ustar(&p.spec, &x, t, &DVector::zeros(6)).unwrap();
            let k = k_matrix(&p.spec, &ustar, &x, t).unwrap();
            assert!(k.amax() <= 1e-6, "{}", k.amax());
        }
    }

    #[test]
    fn p_xu_is_b_pi0_for_identity_and_scales_with_p() {
        let p = build_benchmark();
        let mut cfg = MetricConfig::benchmark();
        let x = v(&[0.2, 0.1, -0.4, 0.0]);
        let bpi0 = BenchmarkPlant::b_matrix() * p.spec.pi0();
        let pxu = p_xu_matrix(&cfg, p.plant.as_ref(), &p.spec, &x, &v(&[0.3, -0.1]), 0.5).unwrap();
        assert_eq!(pxu, bpi0);
        cfg.p = Arc::new(ConstantMetric::scaled_identity(4, 2.0));
        let pxu2 = p_xu_matrix(&cfg, p.plant.as_ref(), &p.spec, &x, &v(&[0.3, -0.1]), 0.5).unwrap();
        assert_eq!(pxu2, bpi0 * 2.0);
    }

    /// Plant with a state- and input-dependent input matrix, so the shift by
    /// `Π₀U*` inside `P_xU` is visible.
    struct Bilinear;

    impl Plant for Bilinear {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn f(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
            v(&[-x[0] + u[0] + 0.1 * u[0] * u[0] * u[0]])
        }
        fn fx(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, -1.0)
        }
        fn fu(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 1.0 + 0.3 * u[0] * u[0])
        }
    }

    #[test]
    fn p_xu_bar_agrees_with_shifted_p_xu_and_differences() {
        use crate::ocp::QuadraticCost;
        let plant = Arc::new(Bilinear);
        let spec = OcpSpec::euler(
            plant.clone(),
            2,
            0.5,
            Arc::new(QuadraticCost {
                state_weight: 1.0,
                input_weight: 1.0,
                terminal_weight: 1.0,
            }),
        )
        .unwrap();
        let cfg = MetricConfig {
            p: Arc::new(ConstantMetric::identity(1)),
            q: Arc::new(ConstantMetric::identity(2)),
            ..MetricConfig::benchmark()
        };
        let x = v(&[0.8]);
        let t = 0.0;
        let ustar = solve_ustar(&spec, &x, t, &DVector::zeros(2)).unwrap();
        let u = v(&[0.4]);
        let u_r = &u - spec.first_input(&ustar);
        let shifted = p_xu_matrix(&cfg, plant.as_ref(), &spec, &x, &u_r, t).unwrap();
        let bar = p_xu_bar(&cfg, plant.as_ref(), &spec, &x, &u, t);
        assert!((&shifted - &bar).amax() < 1e-9);
        // ∂f_r/∂u_r by differences of f_r(u_r) = f(x, Π₀U* + u_r).
        let f_r = |ur: f64| plant.f(&x, &(spec.first_input(&ustar) + v(&[ur])), t)[0];
        let h = 1e-6;
        let fd = (f_r(u_r[0] + h) - f_r(u_r[0] - h)) / (2.0 * h);
        assert!((fd - shifted[(0, 0)]).abs() / fd.abs() <= 1e-5);
        assert_eq!(shifted[(0, 1)], 0.0);
    }
}
