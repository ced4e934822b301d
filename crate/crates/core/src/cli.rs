//! Command-line front end: `simulate`, `hj-check`, `reduce`, `plot`.
//! Exit codes: 0 success, 1 a verification threshold was exceeded,
//! 2 configuration/usage error, 3 singular KKT or Legendre data,
//! 4 trajectory blow-up.

use crate::config::FileConfig;
use crate::error::{Error, Result};
use crate::hj::{self, HjReport};
use crate::integrator::IntegrateOptions;
use crate::systems::{make_system, scale_section_gamma, SystemDef};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "diracmech", version, about = "Degenerate constrained mechanics toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Integrate the constrained dynamics and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Verify a built-in Hamilton-Jacobi solution section (or a perturbation of it).
    HjCheck(HjCheckArgs),
    /// Integrate the reduced dynamics, reconstruct, and compare with the direct run.
    Reduce(ReduceArgs),
    /// Render CSV columns as a static SVG line chart.
    Plot(PlotArgs),
}

#[derive(Args)]
pub struct SystemArgs {
    /// Built-in system name (roller-racer, lc-circuit, bicycle, flat-toy, point-vortex).
    #[arg(long)]
    pub system: Option<String>,
    /// Parameter override as key=value; repeatable.
    #[arg(long = "param", value_name = "K=V")]
    pub param: Vec<String>,
    /// TOML config file; command-line flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Final time.
    #[arg(long = "T", default_value_t = 10.0)]
    pub t_final: f64,
    /// Step size.
    #[arg(long = "h", default_value_t = 1e-3)]
    pub step: f64,
    /// RNG seed for sampling-based diagnostics.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "trajectory.csv")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct HjCheckArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Flow horizon for the solution/direct cross-check (default: per system).
    #[arg(long = "T")]
    pub t_final: Option<f64>,
    /// Step size for the cross-check flows.
    #[arg(long = "h", default_value_t = 1e-3)]
    pub step: f64,
    /// RNG seed for the sample sweep.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Root branch of the closed-form solution: +1 or -1.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub branch: i8,
    /// Relative perturbation applied to the momentum one-form before checking.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub perturb: f64,
    /// Residual threshold for pass/fail.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Final time.
    #[arg(long = "T", default_value_t = 10.0)]
    pub t_final: f64,
    /// Step size.
    #[arg(long = "h", default_value_t = 1e-3)]
    pub step: f64,
    /// RNG seed for bundle validation sampling.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Threshold on the reconstruction-vs-direct sup-norm gap.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Output CSV path for the reduced trajectory; the reconstructed full
    /// trajectory lands next to it with a `.reconstructed.csv` suffix.
    #[arg(long, default_value = "reduced.csv")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PlotArgs {
    /// Input CSV path.
    pub input: PathBuf,
    /// Comma-separated column names: first is the x axis, the rest are series.
    #[arg(long)]
    pub columns: String,
    /// Output SVG path.
    #[arg(long, default_value = "plot.svg")]
    pub out: PathBuf,
}

/// Map library errors onto the documented process exit codes.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::SingularKkt(_) | Error::SingularReducedLegendre | Error::SingularAlmostSymplectic => 3,
        Error::BlowUp { .. } => 4,
        _ => 2,
    }
}

fn parse_param(spec: &str) -> Result<(String, f64)> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("--param expects key=value, got `{spec}`")))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("--param {key}: `{value}` is not a number")))?;
    Ok((key.trim().to_string(), v))
}

/// Resolve the system plus initial state from flags and the optional config
/// file (flags win).
fn resolve_system(args: &SystemArgs) -> Result<(SystemDef, Vec<f64>, Vec<f64>)> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let name = args
        .system
        .clone()
        .or_else(|| file.system.as_ref().map(|s| s.name.clone()))
        .ok_or_else(|| Error::config("no system selected: pass --system or a config file"))?;
    let mut overrides = file.param_overrides()?;
    for spec in &args.param {
        overrides.push(parse_param(spec)?);
    }
    let sys = make_system(&name, &overrides)?;
    let mut q0 = sys.q0.clone();
    let mut v0 = sys.v0.clone();
    if let Some(initial) = &file.initial {
        if let Some(q) = &initial.q {
            if q.len() != sys.dim() {
                return Err(Error::config(format!(
                    "[initial] q has {} entries, system `{}` has dimension {}",
                    q.len(),
                    sys.name,
                    sys.dim()
                )));
            }
            q0 = q.clone();
        }
        if let Some(v) = &initial.v {
            if v.len() != sys.dim() {
                return Err(Error::config(format!(
                    "[initial] v has {} entries, system `{}` has dimension {}",
                    v.len(),
                    sys.name,
                    sys.dim()
                )));
            }
            v0 = v.clone();
        }
    }
    Ok((sys, q0, v0))
}

fn check_grid(t_final: f64, h: f64) -> Result<()> {
    if !(t_final > 0.0) {
        return Err(Error::config("T must be > 0"));
    }
    if !(h > 0.0) {
        return Err(Error::config("h must be > 0"));
    }
    if h >= t_final {
        return Err(Error::config("h must be smaller than T"));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::HjCheck(args) => cmd_hjcheck(args),
        Command::Reduce(args) => cmd_reduce(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let (sys, q0, v0) = resolve_system(&args.sys)?;
    check_grid(args.t_final, args.step)?;
    let traj = crate::integrator::integrate(
        &sys.lagrangian,
        &sys.constraints,
        &q0,
        &v0,
        args.t_final,
        args.step,
        &IntegrateOptions::default(),
    )?;
    crate::io::write_trajectory_csv(&args.out, &traj)?;
    println!("system = {}", sys.name);
    println!("rows = {}", traj.len());
    println!("energy_drift = {:e}", traj.energy_drift());
    println!("max_constraint_residual = {:e}", traj.max_constraint_residual());
    println!("out = {}", args.out.display());
    Ok(0)
}

fn report_failures(checks: &[(&str, f64)], tol: f64) -> Vec<String> {
    checks
        .iter()
        .filter(|(_, v)| !(*v <= tol) )
        .map(|(name, v)| format!("{name} = {v:e} exceeds tol = {tol:e}"))
        .collect()
}

/// Result of a full solution-verification run for one system.
pub struct HjRunOutcome {
    pub linear_velocity: bool,
    pub holonomic: bool,
    /// Absent when the Lagrangian is linear in velocity (nothing to check).
    pub report: Option<HjReport>,
    pub failures: Vec<String>,
}

/// Verify the built-in solution section of `sys` (optionally scaled by
/// `1 + perturb`) on a seeded sample sweep plus one flow cross-check from
/// `q0`. Pass/fail bookkeeping against `tol` lands in `failures`; the flow
/// gap gets a sup-norm budget of at least 1e-6 because it carries
/// fourth-order integration error.
#[allow(clippy::too_many_arguments)]
pub fn run_hj_check(
    sys: &SystemDef,
    q0: &[f64],
    branch: i8,
    perturb: f64,
    t_final: Option<f64>,
    step: f64,
    seed: u64,
    tol: f64,
) -> Result<HjRunOutcome> {
    let e = sys.default_energy;
    let vtheta = sys.default_vtheta;
    let n_samples = 1000;
    let qv = sys.sample_qv(n_samples, seed, e);

    // Linear-in-velocity Lagrangians carry no dynamics information in the
    // generalized-energy equation; report the diagnostic and stop.
    if hj::linear_velocity_diagnostic(&sys.lagrangian, &qv)? {
        return Ok(HjRunOutcome {
            linear_velocity: true,
            holonomic: sys.leaf.is_some(),
            report: None,
            failures: Vec::new(),
        });
    }

    let base = sys.hj_section(e, vtheta, branch)?;
    let section = if perturb != 0.0 {
        scale_section_gamma(&base, 1.0 + perturb)
    } else {
        base
    };
    let q_samples: Vec<Vec<f64>> = qv.iter().map(|(q, _)| q.clone()).collect();
    let t_final = t_final.unwrap_or(sys.default_hj_horizon);
    check_grid(t_final, step)?;

    let (report, enforce_energy) = if let Some(leaf) = &sys.leaf {
        // Holonomic route: checks live on the constraint leaf. The leaf
        // parameterizes the first leaf.dim() coordinates, so leaf samples are
        // the truncated configuration samples.
        let w_samples: Vec<Vec<f64>> =
            q_samples.iter().map(|q| q[..leaf.dim()].to_vec()).collect();
        let hc = hj::holonomic_check(&section, &sys.lagrangian, leaf, &w_samples)?;
        let in_k = hj::check_in_k(&section, &sys.lagrangian, &sys.constraints, &q_samples)?;
        let cross = hj::crosscheck_hj_vs_direct(
            &section,
            &sys.lagrangian,
            &sys.constraints,
            q0,
            t_final,
            step,
        )?;
        let bracket = hj::completely_nonholonomic(&sys.constraints, &q_samples[..8.min(q_samples.len())])?;
        let report = HjReport {
            in_k_residual: in_k,
            dgamma_residual: hc.closedness,
            dhj_residual: hc.energy_gradient,
            energy_mean: hc.energy_mean,
            energy_dev: hc.energy_dev,
            crosscheck_dev: Some(cross),
            bracket_generating: Some(bracket),
        };
        // constancy on the leaf is exactly the holonomic specialization;
        // always enforced there
        (report, true)
    } else {
        let report = hj::hj_report(
            &section,
            &sys.lagrangian,
            &sys.constraints,
            &q_samples,
            Some((q0, t_final, step)),
        )?;
        let enforce = report.bracket_generating == Some(true);
        (report, enforce)
    };

    let mut checks = vec![
        ("in_K_residual", report.in_k_residual),
        ("dgamma_residual", report.dgamma_residual),
        ("dhj_residual", report.dhj_residual),
    ];
    if enforce_energy {
        checks.push(("energy_dev", report.energy_dev));
    }
    let mut failures = report_failures(&checks, tol);
    if let Some(c) = report.crosscheck_dev {
        let cross_tol = tol.max(1e-6);
        if !(c <= cross_tol) {
            failures.push(format!("crosscheck_dev = {c:e} exceeds tol = {cross_tol:e}"));
        }
    }
    Ok(HjRunOutcome {
        linear_velocity: false,
        holonomic: sys.leaf.is_some(),
        report: Some(report),
        failures,
    })
}

fn cmd_hjcheck(args: HjCheckArgs) -> Result<u8> {
    let (sys, q0, _v0) = resolve_system(&args.sys)?;
    println!("system = {}", sys.name);
    let outcome = run_hj_check(
        &sys,
        &q0,
        args.branch,
        args.perturb,
        args.t_final,
        args.step,
        args.seed,
        args.tol,
    )?;
    println!("linear_velocity = {}", outcome.linear_velocity);
    if outcome.linear_velocity {
        println!(
            "note = E o Upsilon is configuration level-set information only; residual checks skipped"
        );
        return Ok(0);
    }
    println!("holonomic = {}", outcome.holonomic);
    if let Some(report) = &outcome.report {
        print!("{report}");
    }
    for f in &outcome.failures {
        println!("failed: {f}");
    }
    Ok(if outcome.failures.is_empty() { 0 } else { 1 })
}

fn cmd_reduce(args: ReduceArgs) -> Result<u8> {
    let (sys, q0, v0) = resolve_system(&args.sys)?;
    check_grid(args.t_final, args.step)?;
    let red_sys = sys.reduced_system(args.seed)?;
    let residual = sys.constraints.apply(&q0, &v0);
    if residual.len() > 0 && residual.amax() > 1e-9 {
        return Err(Error::config(
            "initial velocity violates the constraints; reduction needs horizontal data",
        ));
    }
    let (r0, s0) = red_sys.bundle().split(&q0);
    let vbar0 = red_sys.bundle().base_components(&v0);
    let pbar0 = red_sys.reduced_momentum(&r0, &vbar0);

    let red = crate::chaplygin::integrate_reduced(&red_sys, &r0, &pbar0, args.t_final, args.step)?;
    let full = crate::chaplygin::reconstruct(&red_sys, &red, &s0)?;
    let direct = crate::integrator::integrate(
        &sys.lagrangian,
        &sys.constraints,
        &q0,
        &v0,
        args.t_final,
        args.step,
        &IntegrateOptions::default(),
    )?;
    let gap = full.sup_distance(&direct);

    let recon_path = reconstructed_path(&args.out);
    crate::io::write_reduced_csv(&args.out, &red, red_sys.bundle().base_indices())?;
    crate::io::write_trajectory_csv(&recon_path, &full)?;
    println!("system = {}", sys.name);
    println!("rows = {}", red.len());
    println!("reduction_gap = {gap:e}");
    println!("reduced_energy_drift = {:e}", red.energy_drift());
    println!("max_constraint_residual = {:e}", full.max_constraint_residual());
    println!("reduced_out = {}", args.out.display());
    println!("reconstructed_out = {}", recon_path.display());
    if gap <= args.tol {
        Ok(0)
    } else {
        println!("failed: reduction_gap = {gap:e} exceeds tol = {:e}", args.tol);
        Ok(1)
    }
}

fn reconstructed_path(out: &Path) -> PathBuf {
    let stem = out.to_string_lossy();
    let base = stem.strip_suffix(".csv").unwrap_or(&stem);
    PathBuf::from(format!("{base}.reconstructed.csv"))
}

fn cmd_plot(args: PlotArgs) -> Result<u8> {
    let names: Vec<String> = args.columns.split(',').map(|s| s.trim().to_string()).collect();
    if names.len() < 2 {
        return Err(Error::config("--columns needs an x column and at least one y column"));
    }
    let (header, rows) = crate::io::read_csv(&args.input)?;
    let svg = crate::plot::render_svg(&header, &rows, &names[0], &names[1..])?;
    crate::io::atomic_write(&args.out, &svg)?;
    println!("out = {}", args.out.display());
    Ok(0)
}
