//! Command-line front end: geodesic runs, exponential and log maps, scaling
//! profiles and lengths, the Ricci curl test, curvature reports, and the
//! verification suites.
//!
//! Exit codes: 0 on success (a geodesic reaching the boundary of the positive
//! cone is a reported event, not a failure), 1 when a numerical gate fails,
//! 2 for configuration errors.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use config::{RunConfig, VelocitySpec};
use metman::checks;
use metman::explog::{exp_map, log_map, ExpMapOptions, LogMapOptions};
use metman::geodesic::integrate_geodesic;
use metman::io::{self, StoredField};
use metman::operator::{OperatorFamily, PhiFunction};
use metman::ricci;
use metman::scaling::{
    curvature_scaling_length, extract_psi_f, scaling_length, LengthReport, ScalingCoeffs,
};
use metman::{Geometry, Grid, OperatorSpec};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "metman", version, about = "Geometry on the manifold of Riemannian metrics over flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override: square grid extent.
    #[arg(long)]
    grid: Option<usize>,
    /// Override: replaces every generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override: gate tolerance of the command.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a geodesic and write monitors, a manifest and snapshots.
    Geodesic(CommonArgs),
    /// Exponential map: integrate to unit time and write the endpoint.
    Expmap(CommonArgs),
    /// Log map: solve the shooting problem for the initial velocity.
    Logmap(CommonArgs),
    /// Scaling-ray profile, radial coefficients and shrinking length.
    Scaling(ScalingArgs),
    /// Two-path curl test for the Ricci vector field.
    RicciCurl(CommonArgs),
    /// Curvature report of the configured metric.
    Curvature(CommonArgs),
    /// Run a verification suite and print a check table.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ScalingArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Operator family: identity | conformal | sobolev | curvature.
    #[arg(long)]
    family: String,
    /// Power exponent of the conformal weight.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Base dimension when no config is given.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Base volume of the ray.
    #[arg(long, default_value_t = 1.0)]
    vol: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// variational | adjoint | conservation | scaling | all
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 32)]
    grid: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Configuration and schema problems exit 2, numerical failures 1.
            if e.to_string().contains("config") || e.to_string().contains("parsing") {
                2
            } else {
                1
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Geodesic(args) => cmd_geodesic(args),
        Command::Expmap(args) => cmd_expmap(args),
        Command::Logmap(args) => cmd_logmap(args),
        Command::Scaling(args) => cmd_scaling(args),
        Command::RicciCurl(args) => cmd_ricci_curl(args),
        Command::Curvature(args) => cmd_curvature(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn load_config(args: &CommonArgs) -> anyhow::Result<RunConfig> {
    let path = args
        .config
        .as_ref()
        .context("this command needs --config <path>")?;
    Ok(RunConfig::load(path)?.with_overrides(args.grid, args.seed))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_geodesic(args: CommonArgs) -> anyhow::Result<i32> {
    let cfg = load_config(&args)?;
    let grid = cfg.grid.build()?;
    let g0 = cfg.initial_metric.build(&grid)?;
    let u0 = cfg.initial_velocity.build(&grid, &g0)?;
    let traj = integrate_geodesic(&cfg.operator, &g0, &u0, &cfg.integrator.options())?;

    std::fs::create_dir_all(&args.out)?;
    io::write_trajectory(&args.out, &traj, cfg.output.snapshots)?;
    let last = traj.monitors.last().expect("at least one monitor");
    let e0 = traj.monitors[0].energy;
    let drift = traj
        .monitors
        .iter()
        .fold(0.0f64, |m, r| m.max((r.energy - e0).abs() / e0.abs().max(1e-300)));
    println!(
        "geodesic: {} steps to t = {:.6}, halt {:?}, energy drift {:.3e}, momentum drift {:.3e}",
        traj.monitors.len() - 1,
        last.t,
        traj.halt,
        drift,
        last.momentum_drift
    );
    if traj.boundary_reached() {
        println!("boundary reached: the metric left the positive cone (expected for shrinking rays)");
    }
    Ok(0)
}

fn cmd_expmap(args: CommonArgs) -> anyhow::Result<i32> {
    let cfg = load_config(&args)?;
    let grid = cfg.grid.build()?;
    let g0 = cfg.initial_metric.build(&grid)?;
    let u0 = cfg.initial_velocity.build(&grid, &g0)?;
    let opts = ExpMapOptions {
        dt: cfg.integrator.dt,
        scheme: cfg.integrator.scheme,
        spd_floor: cfg.integrator.spd_floor,
    };
    std::fs::create_dir_all(&args.out)?;
    match exp_map(&cfg.operator, &g0, &u0, &opts) {
        Ok(g1) => {
            io::write_field(&args.out.join("expmap_g1.json"), &StoredField::Metric(g1))?;
            write_json(
                &args.out.join("expmap_report.json"),
                &serde_json::json!({"version": VERSION, "status": "ok", "dt": opts.dt}),
            )?;
            println!("expmap: endpoint written to {}", args.out.join("expmap_g1.json").display());
            Ok(0)
        }
        Err(metman::Error::BoundaryReached { t }) => {
            write_json(
                &args.out.join("expmap_report.json"),
                &serde_json::json!({"version": VERSION, "status": "boundary_reached", "t": t}),
            )?;
            eprintln!("expmap: geodesic left the positive cone at t = {t:.6}");
            Ok(1)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_logmap(args: CommonArgs) -> anyhow::Result<i32> {
    let cfg = load_config(&args)?;
    let grid = cfg.grid.build()?;
    let g0 = cfg.initial_metric.build(&grid)?;
    let target = cfg
        .target_metric
        .as_ref()
        .context("logmap config needs target_metric")?;
    let g1 = target.build(&grid)?;
    let opts = LogMapOptions {
        exp: ExpMapOptions {
            dt: cfg.integrator.dt,
            scheme: cfg.integrator.scheme,
            spd_floor: cfg.integrator.spd_floor,
        },
        ..Default::default()
    };
    std::fs::create_dir_all(&args.out)?;
    match log_map(&cfg.operator, &g0, &g1, &opts) {
        Ok((u, report)) => {
            io::write_field(&args.out.join("logmap_u.json"), &StoredField::Sym2(u))?;
            write_json(
                &args.out.join("logmap_report.json"),
                &serde_json::json!({
                    "version": VERSION,
                    "iterations": report.iterations,
                    "final_residual": report.final_residual,
                }),
            )?;
            println!(
                "logmap: converged in {} iterations, residual {:.3e}",
                report.iterations, report.final_residual
            );
            Ok(0)
        }
        Err(metman::Error::LogMapDidNotConverge {
            iterations,
            residual,
        }) => {
            write_json(
                &args.out.join("logmap_report.json"),
                &serde_json::json!({
                    "version": VERSION,
                    "status": "did_not_converge",
                    "iterations": iterations,
                    "final_residual": residual,
                }),
            )?;
            eprintln!("logmap: no convergence after {iterations} iterations (residual {residual:.3e})");
            Ok(1)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_scaling(args: ScalingArgs) -> anyhow::Result<i32> {
    let common = &args.common;
    std::fs::create_dir_all(&common.out)?;

    // The base metric: flat on a unit-volume torus unless a config says more.
    let (g0, op, n, vol0) = match args.family.as_str() {
        "identity" => (None, OperatorSpec::identity(), args.n, args.vol),
        "sobolev" => (None, OperatorSpec::sobolev(1), args.n, args.vol),
        "conformal" => (
            None,
            OperatorSpec::conformal(PhiFunction::Power { k: args.k }),
            args.n,
            args.vol,
        ),
        "curvature" => {
            let cfg = common
                .config
                .as_ref()
                .map(|p| RunConfig::load(p))
                .transpose()?
                .map(|c| c.with_overrides(common.grid, common.seed));
            let (grid, metric_spec, op) = match cfg {
                Some(c) => {
                    let op = match &c.operator.family {
                        OperatorFamily::Curvature { .. } => c.operator.clone(),
                        _ => bail!("config operator must be the curvature family"),
                    };
                    (c.grid.build()?, c.initial_metric.clone(), op)
                }
                None => (
                    Grid::square(2, common.grid.unwrap_or(16), 1.0)?,
                    config::MetricSpec::Identity { scale: 1.0 },
                    OperatorSpec::curvature_weighted(PhiFunction::AffineExp { a: 1.0, b: 0.1 }),
                ),
            };
            let g0 = metric_spec.build(&grid)?;
            let n = grid.dim();
            let vol0 = Geometry::new(&g0)?.total_volume();
            (Some(g0), op, n, vol0)
        }
        other => bail!("unknown family {other} (config problem)"),
    };

    // Radial coefficients: extracted when a base metric is in play, analytic
    // closed forms otherwise.
    let (coeffs, profile_csv, report): (ScalingCoeffs, String, LengthReport) = match &g0 {
        Some(g0) => {
            let rs: Vec<f64> = (0..120)
                .map(|i| 1e-4f64 * (1e4f64).powf(i as f64 / 119.0))
                .collect();
            let profile = extract_psi_f(&op, g0, &rs)?;
            let mut csv = String::from("r,psi,f\n");
            for i in 0..profile.rs.len() {
                let _ = writeln!(
                    csv,
                    "{:.17e},{:.17e},{:.17e}",
                    profile.rs[i], profile.psi[i], profile.f[i]
                );
            }
            let report = curvature_scaling_length(&op, g0)?;
            let coeffs = ScalingCoeffs::from_profile(&profile, n);
            (coeffs, csv, report)
        }
        None => {
            let coeffs = match &op.family {
                OperatorFamily::Identity | OperatorFamily::Sobolev { .. } => {
                    ScalingCoeffs::LSquared { n }
                }
                OperatorFamily::Conformal { phi } => ScalingCoeffs::ConformalPhi {
                    phi: phi.clone(),
                    vol0,
                    n,
                },
                OperatorFamily::Curvature { .. } => unreachable!("handled above"),
            };
            let mut csv = String::from("r,psi,f\n");
            for i in 0..200 {
                let r = 1e-4f64 * (1e4f64).powf(i as f64 / 199.0);
                let _ = writeln!(csv, "{:.17e},{:.17e},{:.17e}", r, coeffs.psi(r), coeffs.f(r));
            }
            let report = scaling_length(&coeffs, vol0)?;
            (coeffs, csv, report)
        }
    };
    let _ = coeffs;

    std::fs::write(common.out.join("scaling_profile.csv"), profile_csv)?;
    write_json(
        &common.out.join("scaling_summary.json"),
        &serde_json::json!({
            "version": VERSION,
            "family": args.family,
            "n": n,
            "vol0": vol0,
            "length": report.length,
            "finite": report.finite,
            "criterion": report.criterion,
        }),
    )?;
    match report.length {
        Some(len) => println!("length {len:.6}"),
        None => println!("length infinite ({})", report.criterion),
    }
    Ok(0)
}

fn cmd_ricci_curl(args: CommonArgs) -> anyhow::Result<i32> {
    let cfg = load_config(&args)?;
    let grid = cfg.grid.build()?;
    let g = cfg.initial_metric.build(&grid)?;
    let seed = args.seed.unwrap_or(42);
    let h = cfg
        .direction_h
        .clone()
        .unwrap_or(VelocitySpec::RandomSmooth {
            seed: seed + 1,
            amplitude: 0.2,
            max_mode: 2,
        })
        .build(&grid, &g)?;
    let k = cfg
        .direction_k
        .clone()
        .unwrap_or(VelocitySpec::RandomSmooth {
            seed: seed + 2,
            amplitude: 0.2,
            max_mode: 2,
        })
        .build(&grid, &g)?;

    let (lhs, rhs) = ricci::curl_residual(&cfg.operator, &g, &h, &k)?;
    let residual_norm = ricci::gradient_condition_residual(&cfg.operator, &g, &h)?;
    let abs_diff = (lhs - rhs).abs();
    let tol = args.tol.unwrap_or(cfg.tolerances.curl_rel);
    let rel = abs_diff / lhs.abs().max(1e-12);

    std::fs::create_dir_all(&args.out)?;
    write_json(
        &args.out.join("ricci_curl.json"),
        &serde_json::json!({
            "version": VERSION,
            "lhs": lhs,
            "rhs": rhs,
            "abs_diff": abs_diff,
            "residual_norm": residual_norm,
        }),
    )?;
    println!("curl identity: lhs {lhs:.6e}, rhs {rhs:.6e}, |diff| {abs_diff:.3e} (rel {rel:.3e})");
    println!("gradient-condition residual: {residual_norm:.6e}");
    Ok(if rel <= tol { 0 } else { 1 })
}

fn cmd_curvature(args: CommonArgs) -> anyhow::Result<i32> {
    let cfg = load_config(&args)?;
    let grid = cfg.grid.build()?;
    let g = cfg.initial_metric.build(&grid)?;
    let geom = Geometry::new(&g)?;
    let curv = geom.curvature();
    let total = metman::integrate_density(&curv.scal.mul_field(geom.volume_density()));
    let scale = curv.scal.max_abs() * geom.total_volume();
    let normalized = total.abs() / scale.max(1.0);

    std::fs::create_dir_all(&args.out)?;
    io::write_field(
        &args.out.join("scal.json"),
        &StoredField::Scalar(curv.scal.clone()),
    )?;
    io::write_field(
        &args.out.join("ricci.json"),
        &StoredField::Sym2(curv.ricci.clone()),
    )?;
    write_json(
        &args.out.join("curvature_report.json"),
        &serde_json::json!({
            "version": VERSION,
            "total_curvature": total,
            "normalized_total_curvature": normalized,
            "scal_max_abs": curv.scal.max_abs(),
            "volume": geom.total_volume(),
        }),
    )?;
    let tol = args.tol.unwrap_or(cfg.tolerances.gauss_bonnet);
    println!(
        "curvature: total {total:.3e} (normalized {normalized:.3e}), |Scal| up to {:.3e}, volume {:.6}",
        curv.scal.max_abs(),
        geom.total_volume()
    );
    Ok(if normalized <= tol { 0 } else { 1 })
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<i32> {
    let run = |name: &str| -> anyhow::Result<Vec<checks::Check>> {
        Ok(match name {
            "variational" => checks::variational_suite(args.grid, args.seed)?,
            "adjoint" => checks::adjoint_suite(args.grid, args.seed)?,
            "conservation" => checks::conservation_suite(args.grid, args.seed)?,
            "scaling" => checks::scaling_suite(args.seed)?,
            "all" => checks::all_suites(args.grid, args.seed)?,
            other => bail!("unknown suite {other} (config problem)"),
        })
    };
    let list = run(&args.suite)?;
    println!(
        "{:<64} {:>12}    {:>9}  status",
        "check", "value", "tolerance"
    );
    for c in &list {
        println!("{}", checks::format_check(c));
    }
    let passed = list.iter().filter(|c| c.pass).count();
    println!("{passed}/{} checks passed (suite {}, grid {}, seed {})", list.len(), args.suite, args.grid, args.seed);
    Ok(if checks::all_pass(&list) { 0 } else { 1 })
}
