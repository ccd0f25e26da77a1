//! `cmpc`: simulation, mesh certification and metric verification for the
//! continuation-method MPC benchmark.
//!
//! Exit status is 0 on success, 1 when a simulation diverges or a check
//! fails, and 2 for invalid input.

mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use cmpc_core::benchmark::{build_benchmark, initial_conditions, BenchmarkProblem, PRESET_ID, TAU, T_END};
use cmpc_core::contraction::{
    check_assumption1, check_ineq_gk, check_ineq_p_full, check_ineq_p_opt, check_ineq_q, estimate_constants,
    verify_lemma3, CertificateReport, Inequality, Lemma3Options, MeshPreset, MeshSpec, MetricConfig,
};
use cmpc_core::oracle::simulate_optimal;
use cmpc_core::{ClosedLoop, TrajectoryRecord};
use serde::Serialize;
use serde_json::json;

use crate::config::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "cmpc", version, about = "Continuation-method MPC: simulate, certify, verify")]
struct Cli {
    /// Worker threads for mesh sweeps and perturbation runs (default: all cores).
    #[arg(long, global = true, env = "CMPC_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the continuation closed loop from the benchmark initial conditions.
    Simulate(SimulateArgs),
    /// Check a matrix inequality on a mesh.
    Certify(CertifyArgs),
    /// Compare the metric decomposition with perturbed trajectories.
    VerifyLemma3(Lemma3Args),
    /// Estimate the constants of the scalar sufficient condition for GK.
    EstimateConstants(ConstantsArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, default_value = PRESET_ID)]
    preset: String,
    /// JSON file overriding metric constants, P, Q or the mesh.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Initial condition (1, 2 or 3).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    ic: u8,
    #[arg(long)]
    all_initial_conditions: bool,
    /// Also integrate the optimally controlled loop from each initial state.
    #[arg(long)]
    optimal: bool,
    #[arg(long, default_value_t = TAU)]
    tau: f64,
    #[arg(long, default_value_t = T_END)]
    t_end: f64,
    /// Pairwise final-state distance below which trajectories count as converged.
    #[arg(long, default_value_t = 1e-2)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: Common,
    /// Q, P-full, GK, P-opt, assumption1 or all.
    #[arg(long, default_value = "all")]
    ineq: String,
    /// `desk`, `paper`, or a preset name such as `mesh-gk-desk`.
    #[arg(long, default_value = "desk")]
    mesh: String,
    #[arg(long)]
    beta_p: Option<f64>,
}

#[derive(Debug, Args)]
struct Lemma3Args {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    ic: u8,
    #[arg(long, default_value_t = 100)]
    n_perturb: usize,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    #[arg(long, default_value_t = T_END)]
    t_end: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pass iff max |r_e| is at most this.
    #[arg(long, default_value_t = 5e-3)]
    bound: f64,
    /// Write rows for every run instead of only the worst one.
    #[arg(long)]
    all_rows: bool,
}

#[derive(Debug, Args)]
struct ConstantsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "desk")]
    mesh: String,
    #[arg(long)]
    beta_p: Option<f64>,
}

/// Marks errors caused by the caller's input (exit status 2).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn is_usage_error(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause.is::<Usage>()
            || cause.is::<serde_json::Error>()
            || matches!(
                cause.downcast_ref::<cmpc_core::Error>(),
                Some(
                    cmpc_core::Error::Config(_)
                        | cmpc_core::Error::Dimension { .. }
                        | cmpc_core::Error::InvalidAxis { .. }
                        | cmpc_core::Error::MeshTooLarge { .. }
                )
            )
    })
}

struct Setup {
    problem: BenchmarkProblem,
    file: ConfigFile,
    metric: MetricConfig,
}

fn load(common: &Common, beta_p: Option<f64>) -> anyhow::Result<Setup> {
    if common.preset != PRESET_ID {
        return Err(usage(format!("unknown preset `{}` (available: {PRESET_ID})", common.preset)));
    }
    let file = match &common.config {
        Some(path) => ConfigFile::load(path).map_err(|e| usage(format!("{e:#}")))?,
        None => ConfigFile::default(),
    };
    let mut metric = file.metric().map_err(|e| usage(format!("{e:#}")))?;
    if let Some(b) = beta_p {
        metric.beta_p = b;
    }
    metric.validate()?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(Setup {
        problem: build_benchmark(),
        file,
        metric,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn write_trajectory(path: &Path, record: &TrajectoryRecord) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    record.write_csv(BufWriter::new(file))?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<bool> {
    let ctx = load(&args.common, None)?;
    let p = &ctx.problem;
    let cl = ClosedLoop::new(p.plant.as_ref(), &p.spec, &p.virtual_dynamics);
    let ics = initial_conditions();
    let chosen: Vec<usize> = if args.all_initial_conditions {
        (0..ics.len()).collect()
    } else {
        vec![usize::from(args.ic) - 1]
    };
    let started = std::time::Instant::now();
    let mut records = Vec::new();
    let mut entries = Vec::new();
    for &i in &chosen {
        let record = cl.simulate(&ics[i], args.t_end, args.tau)?;
        write_trajectory(&args.common.out.join(format!("trajectory_{}.csv", i + 1)), &record)?;
        let (first, last) = (record.first().expect("non-empty"), record.last().expect("non-empty"));
        let mut entry = json!({
            "ic": i + 1,
            "final_x": last.x,
            "zeta_norm_initial": first.zeta_norm,
            "zeta_norm_final": last.zeta_norm,
            "zeta_ratio": last.zeta_norm / first.zeta_norm,
        });
        if args.optimal {
            let opt = simulate_optimal(p.plant.as_ref(), &p.spec, &ics[i].x, ics[i].t, args.t_end, args.tau)?;
            write_trajectory(&args.common.out.join(format!("optimal_{}.csv", i + 1)), &opt)?;
            entry["distance_to_optimal_final"] = json!(record.final_state_distance(&opt));
        }
        entries.push(entry);
        records.push(record);
    }
    let mut pairwise = Vec::new();
    for a in 0..records.len() {
        for b in a + 1..records.len() {
            pairwise.push(json!({
                "pair": [chosen[a] + 1, chosen[b] + 1],
                "final_distance": records[a].final_state_distance(&records[b]),
            }));
        }
    }
    let max_pair = pairwise
        .iter()
        .filter_map(|p| p["final_distance"].as_f64())
        .fold(0.0, f64::max);
    let summary = json!({
        "command": "simulate",
        "preset": args.common.preset,
        "tau": args.tau,
        "t_end": args.t_end,
        "trajectories": entries,
        "pairwise": pairwise,
        "max_pairwise_final_distance": max_pair,
        "threshold": args.threshold,
        "converged": (records.len() > 1).then_some(max_pair <= args.threshold),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(&args.common.out.join("summary.json"), &summary)?;
    println!(
        "simulated {} trajectories to t = {}; max pairwise final distance {:.3e}",
        records.len(),
        args.t_end,
        max_pair
    );
    Ok(true)
}

fn resolve_mesh(name: &str, ineq: Inequality, file: &ConfigFile) -> anyhow::Result<MeshSpec> {
    if let Some(mesh) = &file.mesh {
        return Ok(mesh.clone());
    }
    let preset = match (name, ineq) {
        ("desk", Inequality::Q) => MeshPreset::QDesk,
        ("paper", Inequality::Q) => MeshPreset::Q,
        ("desk", Inequality::POpt) => MeshPreset::POptDesk,
        ("paper", Inequality::POpt) => MeshPreset::POpt,
        ("desk", _) => MeshPreset::GkDesk,
        ("paper", _) => MeshPreset::Gk,
        (other, _) => MeshPreset::from_str(other)?,
    };
    let mesh = preset.build();
    mesh.validate()?;
    Ok(mesh)
}

fn run_certificate(ctx: &Setup, ineq: Inequality, mesh: &MeshSpec) -> anyhow::Result<CertificateReport> {
    let p = &ctx.problem;
    let cfg = &ctx.metric;
    Ok(match ineq {
        Inequality::Q => check_ineq_q(cfg, &p.virtual_dynamics, mesh)?,
        Inequality::PFull => check_ineq_p_full(cfg, p.plant.as_ref(), &p.spec, mesh)?,
        Inequality::Gk => check_ineq_gk(cfg, p.plant.as_ref(), &p.spec, mesh)?,
        Inequality::POpt => check_ineq_p_opt(cfg, p.plant.as_ref(), &p.spec, mesh)?,
        Inequality::Assumption1 => check_assumption1(&p.spec, mesh)?,
    })
}

fn certify(args: &CertifyArgs) -> anyhow::Result<bool> {
    let ctx = load(&args.common, args.beta_p)?;
    let which: Vec<Inequality> = if args.ineq.eq_ignore_ascii_case("all") {
        Inequality::ALL.to_vec()
    } else {
        vec![Inequality::from_str(&args.ineq)?]
    };
    let mut reports = Vec::new();
    for ineq in which {
        let mesh = resolve_mesh(&args.mesh, ineq, &ctx.file)?;
        let report = run_certificate(&ctx, ineq, &mesh)?;
        println!(
            "{:<12} {} worst margin {:+.6e} over {} points ({:.2} s){}",
            ineq.as_str(),
            if report.pass { "PASS" } else { "FAIL" },
            report.worst_margin,
            report.points_checked,
            report.wall_time_s,
            report.max_norm.map(|n| format!(", max norm {n:.4e}")).unwrap_or_default()
        );
        write_json(
            &args.common.out.join(format!("certificate_{}.json", ineq.as_str())),
            &report,
        )?;
        reports.push(report);
    }
    let pass = reports.iter().all(|r| r.pass);
    write_json(
        &args.common.out.join("summary.json"),
        &json!({ "command": "certify", "pass": pass, "reports": reports }),
    )?;
    Ok(pass)
}

fn lemma3(args: &Lemma3Args) -> anyhow::Result<bool> {
    let ctx = load(&args.common, None)?;
    let p = &ctx.problem;
    let cl = ClosedLoop::new(p.plant.as_ref(), &p.spec, &p.virtual_dynamics);
    let opts = Lemma3Options {
        n_perturb: args.n_perturb,
        epsilon: args.epsilon,
        tau: args.tau,
        t_end: args.t_end,
        seed: args.seed,
        keep_rows: true,
    };
    let s0 = &initial_conditions()[usize::from(args.ic) - 1];
    let mut result = verify_lemma3(&ctx.metric, &cl, s0, &opts)?;
    let pass = result.within(args.bound);

    let mut written = result.clone();
    if !args.all_rows {
        written.runs.retain(|r| r.index == result.worst_run);
    }
    let file = File::create(args.common.out.join("lemma3.csv"))?;
    written.write_csv(BufWriter::new(file))?;

    for run in &mut result.runs {
        run.rows.clear();
    }
    write_json(
        &args.common.out.join("summary.json"),
        &json!({
            "command": "verify-lemma3",
            "pass": pass,
            "bound": args.bound,
            "options": opts,
            "result": result,
        }),
    )?;
    println!(
        "max |r_e| = {:.4e} (run {}, bound {:.1e}) over {} perturbations in {:.1} s: {}",
        result.max_abs_r_e,
        result.worst_run,
        args.bound,
        result.runs.len(),
        result.wall_time_s,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn constants(args: &ConstantsArgs) -> anyhow::Result<bool> {
    let ctx = load(&args.common, args.beta_p)?;
    let mesh = resolve_mesh(&args.mesh, Inequality::Gk, &ctx.file)?;
    if mesh.input.is_empty() {
        bail!(usage("constant estimation needs a mesh with U axes"));
    }
    let p = &ctx.problem;
    let c = estimate_constants(&ctx.metric, p.plant.as_ref(), &p.spec, &mesh)?;
    let beta_p = ctx.metric.beta_p;
    let holds = c.sufficient_condition_holds(beta_p);
    write_json(
        &args.common.out.join("summary.json"),
        &json!({
            "command": "estimate-constants",
            "constants": c,
            "beta_p": beta_p,
            "lhs": c.sufficient_lhs(),
            "rhs": c.sufficient_rhs(beta_p),
            "sufficient_condition_holds": holds,
        }),
    )?;
    println!(
        "lambda_H = {:.4}, c_x^zeta = {:.4}, c_u^f = {:.4}, p in [{:.4}, {:.4}]; 2 c_u c_x p_max = {:.4e} vs beta_p p_min lambda_H = {:.4e}",
        c.lambda_h,
        c.c_x_zeta,
        c.c_u_f,
        c.p_min,
        c.p_max,
        c.sufficient_lhs(),
        c.sufficient_rhs(beta_p)
    );
    Ok(true)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage("worker count must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Certify(a) => certify(a),
        Command::VerifyLemma3(a) => lemma3(a),
        Command::EstimateConstants(a) => constants(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage_error(&err) { 2 } else { 1 })
        }
    }
}
