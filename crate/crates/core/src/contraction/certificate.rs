//! Mesh certificates for the contraction inequalities and for positive
//! definiteness of `H`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mesh::{sweep, MeshPoint, MeshSpec, SweepOutcome};
use super::metric::k_from_parts;
use super::operator::{l_operator_with_jacobian, LOperatorOptions};
use super::MetricConfig;
use crate::continuation::VirtualDynamics;
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, spectral_norm, sym_part, sym_spectral_norm};
use crate::ocp::OcpSpec;
use crate::oracle::{sensitivity_with_hessian, solve_ustar_with, NewtonOptions};
use crate::plant::Plant;

/// Slack on `λ_max ≤ 0` absorbing finite-difference noise.
pub const ZERO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inequality {
    /// `L[Q, η, z, β_z] ⪯ 0`.
    #[serde(rename = "Q")]
    Q,
    /// `L[P, f_r, x, β_x] + ⟨P_xU K⟩ ⪯ 0`.
    #[serde(rename = "P-full")]
    PFull,
    /// `⟨P_xU K⟩ − β_p P ⪯ 0`.
    #[serde(rename = "GK")]
    Gk,
    /// `L[P, f_r, x, β_x + β_p] ⪯ 0`.
    #[serde(rename = "P-opt")]
    POpt,
    /// `H ≻ 0`.
    #[serde(rename = "assumption1")]
    Assumption1,
}

impl Inequality {
    pub const ALL: [Inequality; 5] = [
        Inequality::Q,
        Inequality::PFull,
        Inequality::Gk,
        Inequality::POpt,
        Inequality::Assumption1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Inequality::Q => "Q",
            Inequality::PFull => "P-full",
            Inequality::Gk => "GK",
            Inequality::POpt => "P-opt",
            Inequality::Assumption1 => "assumption1",
        }
    }
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Inequality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Inequality::ALL
            .into_iter()
            .find(|i| i.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown inequality `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Pass iff the largest eigenvalue over the mesh is `≤ ZERO_TOLERANCE`.
    MaxEigenvalueNonPositive,
    /// Pass iff the smallest eigenvalue over the mesh is `> 0`.
    MinEigenvaluePositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub inequality: Inequality,
    pub pass: bool,
    /// Largest eigenvalue, or smallest for [`Criterion::MinEigenvaluePositive`].
    pub worst_margin: f64,
    pub argmax_point: Option<MeshPoint>,
    pub points_checked: u64,
    pub wall_time_s: f64,
    pub criterion: Criterion,
    /// For `GK`: largest `‖⟨P_xU K⟩‖` over the mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_point: Option<MeshPoint>,
}

impl CertificateReport {
    fn from_outcome(
        inequality: Inequality,
        criterion: Criterion,
        mesh: &MeshSpec,
        outcome: &SweepOutcome,
        started: Instant,
    ) -> Self {
        let (raw, idx) = outcome.maxima[0];
        let found = idx != u64::MAX;
        let worst_margin = match criterion {
            Criterion::MaxEigenvalueNonPositive => raw,
            Criterion::MinEigenvaluePositive => -raw,
        };
        let ok = match criterion {
            Criterion::MaxEigenvalueNonPositive => worst_margin <= ZERO_TOLERANCE,
            Criterion::MinEigenvaluePositive => worst_margin > 0.0,
        };
        CertificateReport {
            inequality,
            pass: found && ok && outcome.failure.is_none(),
            worst_margin,
            argmax_point: found.then(|| mesh.point(idx)),
            points_checked: outcome.points,
            wall_time_s: started.elapsed().as_secs_f64(),
            criterion,
            max_norm: None,
            failure: outcome.failure.as_ref().map(|(_, e)| e.to_string()),
            failure_point: outcome.failure.as_ref().map(|(i, _)| mesh.point(*i)),
        }
    }
}

fn require_axes(mesh: &MeshSpec, state: usize, input: &[usize]) -> Result<()> {
    if mesh.state.len() != state {
        return Err(Error::Config(format!(
            "mesh has {} state axes, expected {state}",
            mesh.state.len()
        )));
    }
    if !input.contains(&mesh.input.len()) {
        return Err(Error::Config(format!(
            "mesh has {} input axes, expected one of {input:?}",
            mesh.input.len()
        )));
    }
    mesh.validate()
}

/// `U*(x, t)` and `∂U*/∂x` at one `(x, t)`.
struct Optimum {
    ustar: DVector<f64>,
    sensitivity: DMatrix<f64>,
}

fn solve_optimum(spec: &OcpSpec, warm: &mut Option<DVector<f64>>, x: &DVector<f64>, t: f64) -> Result<Optimum> {
    let opts = NewtonOptions::default();
    let zero = DVector::zeros(spec.design_dim());
    let sol = match warm.as_ref() {
        Some(w) => solve_ustar_with(spec, x, t, w, &opts).or_else(|_| solve_ustar_with(spec, x, t, &zero, &opts)),
        None => solve_ustar_with(spec, x, t, &zero, &opts),
    }?;
    let sensitivity = sensitivity_with_hessian(spec, &sol.hessian, &sol.u, x, t)?;
    *warm = Some(sol.u.clone());
    Ok(Optimum {
        ustar: sol.u,
        sensitivity,
    })
}

fn l_options(cfg: &MetricConfig) -> LOperatorOptions {
    LOperatorOptions {
        constant_metric: cfg.p.is_constant(),
        ..LOperatorOptions::default()
    }
}

/// `L[P, f_r, x, rate]` at applied input `u`, with
/// `∂f_r/∂x = ∂f/∂x + ∂f/∂u·Π₀·∂U*/∂x` (chain rule through `Π₀U*(x, t)`).
fn l_p_fr(
    cfg: &MetricConfig,
    plant: &dyn Plant,
    sensitivity: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    t: f64,
    rate: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = u.len();
    let fu = plant.fu(x, u, t);
    let jac = plant.fx(x, u, t) + &fu * sensitivity.rows(0, m);
    let value = plant.f(x, u, t);
    let l = l_operator_with_jacobian(|x, t| Ok(cfg.p.eval(x, t)), &value, &jac, x, t, rate, &l_options(cfg))?;
    Ok((l, fu))
}

/// `L[Q, η, z, β_z] ⪯ 0` over a mesh whose state axes are `z`.
pub fn check_ineq_q(cfg: &MetricConfig, vd: &dyn VirtualDynamics, mesh: &MeshSpec) -> Result<CertificateReport> {
    let started = Instant::now();
    require_axes(mesh, cfg.q.dim(), &[0])?;
    let opts = LOperatorOptions {
        constant_metric: cfg.q.is_constant(),
        ..LOperatorOptions::default()
    };
    let outcome = sweep(
        mesh,
        1,
        |_, _, _| Ok(()),
        |_, z, t, _| {
            let l = l_operator_with_jacobian(
                |z, t| Ok(cfg.q.eval(z, t)),
                &vd.eta(z, t),
                &vd.jacobian(z, t),
                z,
                t,
                cfg.beta_z,
                &opts,
            )?;
            Ok(vec![max_eigenvalue(&l)])
        },
    );
    Ok(CertificateReport::from_outcome(
        Inequality::Q,
        Criterion::MaxEigenvalueNonPositive,
        mesh,
        &outcome,
        started,
    ))
}

/// `⟨P_xU K⟩` and the pieces shared by the `P-full` and `GK` checks.
fn suboptimality_term(
    cfg: &MetricConfig,
    plant: &dyn Plant,
    spec: &OcpSpec,
    opt: &Optimum,
    x: &DVector<f64>,
    t: f64,
    design: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let h = spec.hessian(design, x, t)?;
    let zeta_x = spec.zeta_x(design, x, t)?;
    let k = k_from_parts(&h, &zeta_x, &opt.sensitivity, t)?;
    let u = spec.first_input(design);
    let p_xu = cfg.p.eval(x, t) * plant.fu(x, &u, t) * spec.pi0();
    Ok((sym_part(&(p_xu * k)), u))
}

/// `L[P, f_r, x, β_x] + ⟨P_xU K⟩ ⪯ 0` over a mesh with `U` axes.
pub fn check_ineq_p_full(
    cfg: &MetricConfig,
    plant: &dyn Plant,
    spec: &OcpSpec,
    mesh: &MeshSpec,
) -> Result<CertificateReport> {
    let started = Instant::now();
    require_axes(mesh, spec.state_dim(), &[spec.design_dim()])?;
    let outcome = sweep(
        mesh,
        1,
        |warm, x, t| solve_optimum(spec, warm, x, t),
        |opt, x, t, design| {
            let design = design.expect("mesh has design axes");
            let (pk, u) = suboptimality_term(cfg, plant, spec, opt, x, t, design)?;
            let (l, _) = l_p_fr(cfg, plant, &opt.sensitivity, x, &u, t, cfg.beta_x)?;
            Ok(vec![max_eigenvalue(&(l + pk))])
        },
    );
    Ok(CertificateReport::from_outcome(
        Inequality::PFull,
        Criterion::MaxEigenvalueNonPositive,
        mesh,
        &outcome,
        started,
    ))
}

/// `⟨P_xU K⟩ − β_p P ⪯ 0` over a mesh with `U` axes. Also reports the
/// largest `‖⟨P_xU K⟩‖`.
pub fn check_ineq_gk(cfg: &MetricConfig, plant: &dyn Plant, spec: &OcpSpec, mesh: &MeshSpec) -> Result<CertificateReport> {
    let started = Instant::now();
    require_axes(mesh, spec.state_dim(), &[spec.design_dim()])?;
    let outcome = sweep(
        mesh,
        2,
        |warm, x, t| solve_optimum(spec, warm, x, t),
        |opt, x, t, design| {
            let design = design.expect("mesh has design axes");
            let (pk, _) = suboptimality_term(cfg, plant, spec, opt, x, t, design)?;
            let norm = sym_spectral_norm(&pk);
            Ok(vec![max_eigenvalue(&(pk - cfg.p.eval(x, t) * cfg.beta_p)), norm])
        },
    );
    let mut report =
        CertificateReport::from_outcome(Inequality::Gk, Criterion::MaxEigenvalueNonPositive, mesh, &outcome, started);
    report.max_norm = (outcome.maxima[1].1 != u64::MAX).then_some(outcome.maxima[1].0);
    Ok(report)
}

/// `L[P, f_r, x, β_x + β_p] ⪯ 0` over `(x, t)` and optionally `u_r` axes
/// (`u_r = 0` when the mesh has none).
pub fn check_ineq_p_opt(
    cfg: &MetricConfig,
    plant: &dyn Plant,
    spec: &OcpSpec,
    mesh: &MeshSpec,
) -> Result<CertificateReport> {
    let started = Instant::now();
    require_axes(mesh, spec.state_dim(), &[0, spec.input_dim()])?;
    let rate = cfg.beta_x + cfg.beta_p;
    let outcome = sweep(
        mesh,
        1,
        |warm, x, t| solve_optimum(spec, warm, x, t),
        |opt, x, t, u_r| {
            let mut u = spec.first_input(&opt.ustar);
            if let Some(u_r) = u_r {
                u += u_r;
            }
            let (l, _) = l_p_fr(cfg, plant, &opt.sensitivity, x, &u, t, rate)?;
            Ok(vec![max_eigenvalue(&l)])
        },
    );
    Ok(CertificateReport::from_outcome(
        Inequality::POpt,
        Criterion::MaxEigenvalueNonPositive,
        mesh,
        &outcome,
        started,
    ))
}

/// Smallest eigenvalue of `H` over a mesh with `U` axes; passes iff positive.
pub fn check_assumption1(spec: &OcpSpec, mesh: &MeshSpec) -> Result<CertificateReport> {
    let started = Instant::now();
    require_axes(mesh, spec.state_dim(), &[spec.design_dim()])?;
    let outcome = sweep(
        mesh,
        1,
        |_, _, _| Ok(()),
        |_, x, t, design| {
            let h = spec.hessian(design.expect("mesh has design axes"), x, t)?;
            Ok(vec![-min_eigenvalue(&h)])
        },
    );
    Ok(CertificateReport::from_outcome(
        Inequality::Assumption1,
        Criterion::MinEigenvaluePositive,
        mesh,
        &outcome,
        started,
    ))
}

/// Mesh estimates of the constants in the scalar sufficient condition for
/// the `GK` inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// `min λ_min(H)`.
    pub lambda_h: f64,
    /// `max ‖∂ζ/∂x‖`.
    pub c_x_zeta: f64,
    /// `max ‖∂f/∂u‖`.
    pub c_u_f: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub points_checked: u64,
}

impl Constants {
    /// `2 c_u^f c_x^ζ p_max`.
    pub fn sufficient_lhs(&self) -> f64 {
        2.0 * self.c_u_f * self.c_x_zeta * self.p_max
    }

    /// `β_p p_min λ_H`.
    pub fn sufficient_rhs(&self, beta_p: f64) -> f64 {
        beta_p * self.p_min * self.lambda_h
    }

    /// Whether `2 c_u^f c_x^ζ p_max ≤ β_p p_min λ_H`.
    pub fn sufficient_condition_holds(&self, beta_p: f64) -> bool {
        self.sufficient_lhs() <= self.sufficient_rhs(beta_p)
    }
}

/// Mesh extremes of `λ(H)`, `‖∂ζ/∂x‖`, `‖∂f/∂u‖` and the eigenvalues of `P`
/// over a mesh with `U` axes.
pub fn estimate_constants(cfg: &MetricConfig, plant: &dyn Plant, spec: &OcpSpec, mesh: &MeshSpec) -> Result<Constants> {
    require_axes(mesh, spec.state_dim(), &[spec.design_dim()])?;
    let outcome = sweep(
        mesh,
        5,
        |_, _, _| Ok(()),
        |_, x, t, design| {
            let design = design.expect("mesh has design axes");
            let h = spec.hessian(design, x, t)?;
            let zeta_x = spec.zeta_x(design, x, t)?;
            let fu = plant.fu(x, &spec.first_input(design), t);
            let p = cfg.p.eval(x, t);
            Ok(vec![
                -min_eigenvalue(&h),
                spectral_norm(&zeta_x),
                spectral_norm(&fu),
                -min_eigenvalue(&p),
                max_eigenvalue(&p),
            ])
        },
    );
    if let Some((i, e)) = outcome.failure {
        let p = mesh.point(i);
        return Err(Error::Config(format!("constant estimation failed at x = {:?}, t = {}: {e}", p.x, p.t)));
    }
    Ok(Constants {
        lambda_h: -outcome.maxima[0].0,
        c_x_zeta: outcome.maxima[1].0,
        c_u_f: outcome.maxima[2].0,
        p_min: -outcome.maxima[3].0,
        p_max: outcome.maxima[4].0,
        points_checked: outcome.points,
    })
}
