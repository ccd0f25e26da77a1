//! Numerical check of the decomposition of `d/dt V + γV` for the
//! differential Lyapunov function `V = δsᵀ M δs` of the closed loop.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::{metric_from_derivatives, p_xu_bar};
use super::operator::{l_operator_with_jacobian, LOperatorOptions};
use super::MetricConfig;
use crate::continuation::{AugmentedState, ClosedLoop};
use crate::error::{Error, Result};
use crate::linalg::sym_part;
use crate::ocp::ZetaDerivatives;
use crate::trajectory::fmt_f64;

/// `D(s, t) = [[L_x, P̄_xU], [P̄_xUᵀ, 0]] + κ (∂ζ/∂s)ᵀ L_ζ (∂ζ/∂s)` with
/// `L_x = L[P, f, x, γ]` at fixed `U` and `L_ζ = L[Q, η, ζ, γ]`.
pub fn decomposition_matrix(cfg: &MetricConfig, cl: &ClosedLoop<'_>, s: &AugmentedState) -> Result<DMatrix<f64>> {
    let d = cl.spec.derivatives(&s.u, &s.x, s.t)?;
    decomposition_from_derivatives(cfg, cl, s, &d)
}

fn decomposition_from_derivatives(
    cfg: &MetricConfig,
    cl: &ClosedLoop<'_>,
    s: &AugmentedState,
    d: &ZetaDerivatives,
) -> Result<DMatrix<f64>> {
    let (x, t) = (&s.x, s.t);
    let n = x.len();
    let design = s.u.len();
    let u = cl.spec.first_input(&s.u);

    let p_opts = LOperatorOptions {
        constant_metric: cfg.p.is_constant(),
        ..LOperatorOptions::default()
    };
    let l_x = l_operator_with_jacobian(
        |x, t| Ok(cfg.p.eval(x, t)),
        &cl.plant.f(x, &u, t),
        &cl.plant.fx(x, &u, t),
        x,
        t,
        cfg.gamma,
        &p_opts,
    )?;
    let coupling = p_xu_bar(cfg, cl.plant, cl.spec, x, &u, t);

    let q_opts = LOperatorOptions {
        constant_metric: cfg.q.is_constant(),
        ..LOperatorOptions::default()
    };
    let vd = cl.virtual_dynamics;
    let l_zeta = if cfg.q.is_constant() {
        let q = cfg.q.eval(&d.zeta, t);
        sym_part(&(&q * vd.jacobian(&d.zeta, t))) + q * cfg.gamma
    } else {
        l_operator_with_jacobian(
            |z, t| Ok(cfg.q.eval(z, t)),
            &vd.eta(&d.zeta, t),
            &vd.jacobian(&d.zeta, t),
            &d.zeta,
            t,
            cfg.gamma,
            &q_opts,
        )?
    };

    let zeta_s = d.zeta_s();
    let mut out = zeta_s.tr_mul(&(l_zeta * &zeta_s)) * cfg.kappa;
    let mut block = out.view_mut((0, 0), (n, n));
    block += l_x;
    let mut upper = out.view_mut((0, n), (n, design));
    upper += &coupling;
    let mut lower = out.view_mut((n, 0), (design, n));
    lower += coupling.transpose();
    Ok(out)
}

/// `d = δsᵀ D δs`.
pub fn lemma3_decomposition(d_matrix: &DMatrix<f64>, delta: &DVector<f64>) -> f64 {
    delta.dot(&(d_matrix * delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Options {
    pub n_perturb: usize,
    /// Half-width of the uniform box for the initial perturbation.
    pub epsilon: f64,
    pub tau: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Keep every per-sample row, not just the per-run maxima.
    pub keep_rows: bool,
}

impl Default for Lemma3Options {
    fn default() -> Self {
        Self {
            n_perturb: 100,
            epsilon: 1e-3,
            tau: 1e-3,
            t_end: 5.0,
            seed: 0,
            keep_rows: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Row {
    pub t: f64,
    pub v_delta: f64,
    pub vdot_delta: f64,
    pub d: f64,
    pub e: f64,
    pub r_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Run {
    pub index: usize,
    pub delta0: Vec<f64>,
    pub max_abs_r_e: f64,
    pub t_at_max: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<Lemma3Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Result {
    pub max_abs_r_e: f64,
    pub worst_run: usize,
    pub samples_per_run: usize,
    pub wall_time_s: f64,
    pub runs: Vec<Lemma3Run>,
}

impl Lemma3Result {
    pub fn within(&self, bound: f64) -> bool {
        self.max_abs_r_e <= bound
    }

    /// Writes `run,t,V_delta,Vdot_delta,d,e,r_e` for every kept row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "run,t,V_delta,Vdot_delta,d,e,r_e")?;
        for run in &self.runs {
            for r in &run.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    run.index,
                    fmt_f64(r.t),
                    fmt_f64(r.v_delta),
                    fmt_f64(r.vdot_delta),
                    fmt_f64(r.d),
                    fmt_f64(r.e),
                    fmt_f64(r.r_e)
                )?;
            }
        }
        Ok(())
    }
}

/// Nominal states with `M` and `D` evaluated at each of them.
struct Nominal {
    states: Vec<DVector<f64>>,
    times: Vec<f64>,
    metric: Vec<DMatrix<f64>>,
    decomposition: Vec<DMatrix<f64>>,
}

fn trajectory(cl: &ClosedLoop<'_>, s0: &AugmentedState, opts: &Lemma3Options) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    cl.integrate(s0, opts.t_end, opts.tau, |_, t, s| {
        times.push(t);
        states.push(s.clone());
        Ok(())
    })?;
    Ok((times, states))
}

fn nominal(cfg: &MetricConfig, cl: &ClosedLoop<'_>, s0: &AugmentedState, opts: &Lemma3Options) -> Result<Nominal> {
    let (times, states) = trajectory(cl, s0, opts)?;
    let n = cl.spec.state_dim();
    let pairs = times
        .par_iter()
        .zip(states.par_iter())
        .map(|(&t, s)| {
            let st = AugmentedState::from_vector(s, n, t);
            let d = cl.spec.derivatives(&st.u, &st.x, t)?;
            let m = metric_from_derivatives(cfg, &d, &st.x, t);
            let dm = decomposition_from_derivatives(cfg, cl, &st, &d)?;
            Ok((m, dm))
        })
        .collect::<Result<Vec<_>>>()?;
    let (metric, decomposition) = pairs.into_iter().unzip();
    Ok(Nominal {
        states,
        times,
        metric,
        decomposition,
    })
}

fn perturbed_run(
    cfg: &MetricConfig,
    cl: &ClosedLoop<'_>,
    nom: &Nominal,
    index: usize,
    delta0: DVector<f64>,
    opts: &Lemma3Options,
) -> Result<Lemma3Run> {
    let n = cl.spec.state_dim();
    let s0 = AugmentedState::from_vector(&(&nom.states[0] + &delta0), n, nom.times[0]);
    let (_, states) = trajectory(cl, &s0, opts)?;
    let deltas: Vec<DVector<f64>> = states.iter().zip(&nom.states).map(|(p, q)| p - q).collect();
    let v: Vec<f64> = deltas
        .iter()
        .zip(&nom.metric)
        .map(|(ds, m)| ds.dot(&(m * ds)))
        .collect();
    if let Some(k) = v.iter().position(|&vk| !(vk > 0.0)) {
        return Err(Error::MetricViolation {
            value: v[k],
            t: nom.times[k],
        });
    }

    let mut run = Lemma3Run {
        index,
        delta0: delta0.iter().copied().collect(),
        max_abs_r_e: 0.0,
        t_at_max: nom.times[0],
        rows: Vec::new(),
    };
    for k in 1..v.len() - 1 {
        let vdot = (v[k + 1] - v[k - 1]) / (nom.times[k + 1] - nom.times[k - 1]);
        let d = lemma3_decomposition(&nom.decomposition[k], &deltas[k]);
        let e = d - vdot - cfg.gamma * v[k];
        let r_e = e / v[k];
        if r_e.abs() > run.max_abs_r_e {
            run.max_abs_r_e = r_e.abs();
            run.t_at_max = nom.times[k];
        }
        if opts.keep_rows {
            run.rows.push(Lemma3Row {
                t: nom.times[k],
                v_delta: v[k],
                vdot_delta: vdot,
                d,
                e,
                r_e,
            });
        }
    }
    Ok(run)
}

/// Integrates a nominal closed-loop trajectory from `s0` and `n_perturb`
/// trajectories from `s0 + δs₀`, `δs₀ ~ U[−ε, ε]`, and compares
/// `d = δsᵀDδs` with the centred difference `V̇_δ + γV_δ`.
///
/// `r_e = (d − V̇_δ − γV_δ)/V_δ` is reported at every interior sample. The
/// perturbations are drawn from a seeded ChaCha8 stream, so results do not
/// depend on the worker count.
pub fn verify_lemma3(
    cfg: &MetricConfig,
    cl: &ClosedLoop<'_>,
    s0: &AugmentedState,
    opts: &Lemma3Options,
) -> Result<Lemma3Result> {
    cfg.validate()?;
    if opts.n_perturb == 0 {
        return Err(Error::Config("need at least one perturbation".into()));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {}", opts.epsilon)));
    }
    let started = Instant::now();
    let nom = nominal(cfg, cl, s0, opts)?;
    if nom.states.len() < 3 {
        return Err(Error::Config("need at least two integrator steps".into()));
    }

    let dim = nom.states[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let deltas: Vec<DVector<f64>> = (0..opts.n_perturb)
        .map(|_| DVector::from_fn(dim, |_, _| rng.gen_range(-opts.epsilon..=opts.epsilon)))
        .collect();

    let runs = deltas
        .into_par_iter()
        .enumerate()
        .map(|(i, d0)| perturbed_run(cfg, cl, &nom, i, d0, opts))
        .collect::<Result<Vec<_>>>()?;

    let (worst_run, max_abs_r_e) = runs
        .iter()
        .map(|r| (r.index, r.max_abs_r_e))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    Ok(Lemma3Result {
        max_abs_r_e,
        worst_run,
        samples_per_run: nom.states.len() - 2,
        wall_time_s: started.elapsed().as_secs_f64(),
        runs,
    })
}
