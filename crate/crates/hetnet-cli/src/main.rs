//! Experiment driver: loads a TOML config, dispatches analytic or Monte
//! Carlo runs (optionally sweeping one parameter), and writes CSV artifacts.
//!
//! Outputs land in `--out` (default `out/`), one file per sweep point except
//! `analytic-outage`, which collects the sweep into a single file. All
//! writes are atomic (temp file + rename) and byte-stable for a fixed seed
//! and config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use hetnet::analytic::{
    delay_bounds_curve, delay_outage, success_bounds_curve, CdfCurve, CurveKind,
};
use hetnet::model::{InterfererModel, SchedulingPolicy};
use hetnet::simulator::{aggregate, run_experiment, write_user_stats_csv, SimulationSummary};
use hetnet::{Config, RawConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    Fifo,
    Rr,
}

impl From<PolicyArg> for SchedulingPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Random => SchedulingPolicy::Random,
            PolicyArg::Fifo => SchedulingPolicy::Fifo,
            PolicyArg::Rr => SchedulingPolicy::RoundRobin,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Original,
    Dominant,
    Modified,
}

impl From<ModelArg> for InterfererModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Original => InterfererModel::Original,
            ModelArg::Dominant => InterfererModel::Dominant,
            ModelArg::Modified => InterfererModel::Modified,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hetnet",
    about = "Delay and success-probability analysis of K-tier cellular networks",
    after_help = "Set HETNET_THREADS to bound the worker pool."
)]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Scheduling policy.
    #[arg(long, global = true, value_enum, default_value = "random")]
    policy: PolicyArg,

    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSV artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Sweep one config field: `<field>=<v1,v2,...>`, e.g.
    /// `tier.2.bias=1,2,4,8,16` or `p=0.1,0.5,0.9`.
    #[arg(long, global = true)]
    sweep: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bounding pair of the success-probability CDF.
    AnalyticSuccess,
    /// Bounding pair of the mean-delay CDF.
    AnalyticDelay,
    /// Delay-outage bounds (one CSV row per sweep point).
    AnalyticOutage,
    /// Slot-stepped Monte Carlo of the queueing network.
    Simulate {
        /// Interferer model to realize.
        #[arg(long, value_enum, default_value = "original")]
        model: ModelArg,
    },
    /// Run both engines and check that the empirical curves sit inside the
    /// analytic bound pair; non-zero exit on violation.
    Validate {
        /// Base containment slack added to twice the Monte Carlo standard
        /// error at each grid point.
        #[arg(long, default_value_t = 0.02)]
        slack: f64,
    },
}

fn main() {
    env_logger::init();
    if let Ok(n) = std::env::var("HETNET_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

/// One point of the (possibly trivial) sweep.
struct SweepPoint {
    label: Option<(String, f64)>,
    config: Config,
}

fn sweep_points(cli: &Cli) -> Result<Vec<SweepPoint>> {
    let path = cli.config.as_ref().context("--config <path> is required")?;
    let mut raw = RawConfig::load(path)?;
    if let Some(seed) = cli.seed {
        raw.set_seed(seed);
    }
    match &cli.sweep {
        None => Ok(vec![SweepPoint {
            label: None,
            config: raw.build()?,
        }]),
        Some(spec) => {
            let (field, values) = spec
                .split_once('=')
                .context("--sweep expects <field>=<v1,v2,...>")?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .context("sweep values must be numbers")
                })
                .collect::<Result<_>>()?;
            if values.is_empty() {
                bail!("--sweep needs at least one value");
            }
            values
                .into_iter()
                .map(|v| {
                    let mut point = raw.clone();
                    point.set_field(field, v)?;
                    Ok(SweepPoint {
                        label: Some((field.to_string(), v)),
                        config: point.build()?,
                    })
                })
                .collect()
        }
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(
        ".tmp_{}_{}",
        std::process::id(),
        path.file_name().unwrap_or_default().to_string_lossy()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn file_name(stem: &str, policy: SchedulingPolicy, label: &Option<(String, f64)>) -> String {
    match label {
        Some((field, value)) => format!("{stem}_{}_{field}={value}.csv", policy.label()),
        None => format!("{stem}_{}.csv", policy.label()),
    }
}

fn curve_bytes(curve: &CdfCurve) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    Ok(buf)
}

fn run(cli: Cli) -> Result<()> {
    let policy: SchedulingPolicy = cli.policy.into();
    let points = sweep_points(&cli)?;

    match &cli.command {
        Command::AnalyticSuccess => {
            points.par_iter().try_for_each(|pt| -> Result<()> {
                let cfg = &pt.config;
                let curve = success_bounds_curve(
                    &cfg.params,
                    policy,
                    &cfg.output.success_grid(),
                    &cfg.quad,
                )?;
                curve
                    .check(10.0 * cfg.quad.abs_tol)
                    .context("success curve invariants")?;
                let path = cli
                    .out
                    .join(file_name("analytic-success", policy, &pt.label));
                atomic_write(&path, &curve_bytes(&curve)?)?;
                println!("wrote {}", path.display());
                Ok(())
            })?;
        }
        Command::AnalyticDelay => {
            points.par_iter().try_for_each(|pt| -> Result<()> {
                let cfg = &pt.config;
                let curve =
                    delay_bounds_curve(&cfg.params, policy, &cfg.output.delay_grid(), &cfg.quad)?;
                curve
                    .check(10.0 * cfg.quad.abs_tol)
                    .context("delay curve invariants")?;
                let path = cli.out.join(file_name("analytic-delay", policy, &pt.label));
                atomic_write(&path, &curve_bytes(&curve)?)?;
                println!("wrote {}", path.display());
                Ok(())
            })?;
        }
        Command::AnalyticOutage => {
            let rows: Vec<(f64, f64, f64)> = points
                .par_iter()
                .map(|pt| -> Result<(f64, f64, f64)> {
                    let cfg = &pt.config;
                    let (lo, hi) = delay_outage(&cfg.params, policy, &cfg.quad)?;
                    Ok((pt.label.as_ref().map_or(0.0, |(_, v)| *v), lo, hi))
                })
                .collect::<Result<_>>()?;
            let mut buf = Vec::new();
            writeln!(buf, "x,value,lower,upper,kind,policy,q")?;
            for (x, lo, hi) in &rows {
                writeln!(
                    buf,
                    "{x},{:.9},{lo:.9},{hi:.9},{},{},{:.9}",
                    0.5 * (lo + hi),
                    CurveKind::DelayOutage.label(),
                    policy.label(),
                    points[0].config.params.p
                )?;
            }
            let path = cli
                .out
                .join(format!("analytic-outage_{}.csv", policy.label()));
            atomic_write(&path, &buf)?;
            println!("wrote {}", path.display());
        }
        Command::Simulate { model } => {
            let model: InterfererModel = (*model).into();
            points.par_iter().try_for_each(|pt| -> Result<()> {
                let cfg = &pt.config;
                let summary = simulate_point(cfg, policy, model, &cli.out, &pt.label)?;
                println!(
                    "simulated {} users ({} unstable, outage {:.4})",
                    summary.total_users, summary.unstable, summary.delay_outage
                );
                Ok(())
            })?;
        }
        Command::Validate { slack } => {
            let mut worst: f64 = 0.0;
            for pt in &points {
                worst = worst.max(validate_point(
                    &pt.config, policy, *slack, &cli.out, &pt.label,
                )?);
            }
            println!("max containment violation: {worst:.6}");
            if worst > 0.0 {
                bail!("containment violated by {worst:.6}");
            }
        }
    }
    Ok(())
}

fn simulate_point(
    cfg: &Config,
    policy: SchedulingPolicy,
    model: InterfererModel,
    out: &Path,
    label: &Option<(String, f64)>,
) -> Result<SimulationSummary> {
    let sim = cfg
        .sim
        .context("config needs a [simulation] section for this command")?;
    let stats = run_experiment(&cfg.params, policy, model, &sim)?;
    let summary = aggregate(
        &stats,
        policy,
        &cfg.output.delay_grid(),
        &cfg.output.success_grid(),
        sim.stability_queue_cap,
        cfg.params.p,
    );

    let stem = format!("sim-{}", model.label());
    let mut users_buf = Vec::new();
    write_user_stats_csv(&stats, &mut users_buf)?;
    atomic_write(
        &out.join(file_name(&format!("{stem}-users"), policy, label)),
        &users_buf,
    )?;
    atomic_write(
        &out.join(file_name(&format!("{stem}-delay-cdf"), policy, label)),
        &curve_bytes(&summary.delay_cdf)?,
    )?;
    atomic_write(
        &out.join(file_name(&format!("{stem}-success-cdf"), policy, label)),
        &curve_bytes(&summary.success_cdf)?,
    )?;

    let mut buf = Vec::new();
    writeln!(buf, "key,value")?;
    writeln!(buf, "total_users,{}", summary.total_users)?;
    writeln!(buf, "delay_samples,{}", summary.delay_samples)?;
    writeln!(buf, "success_samples,{}", summary.success_samples)?;
    writeln!(buf, "users_no_data,{}", summary.users_no_data)?;
    writeln!(buf, "unstable,{}", summary.unstable)?;
    writeln!(buf, "unstable_at_half_cap,{}", summary.unstable_at_half_cap)?;
    writeln!(
        buf,
        "unstable_at_double_cap,{}",
        summary.unstable_at_double_cap
    )?;
    writeln!(buf, "delay_outage,{:.9}", summary.delay_outage)?;
    atomic_write(
        &out.join(file_name(&format!("{stem}-summary"), policy, label)),
        &buf,
    )?;
    Ok(summary)
}

/// Empirical curves must fall inside [analytic lower - s, analytic upper + s]
/// with s = slack + 2 * Monte Carlo standard error; returns the worst
/// violation across both curves.
fn validate_point(
    cfg: &Config,
    policy: SchedulingPolicy,
    slack: f64,
    out: &Path,
    label: &Option<(String, f64)>,
) -> Result<f64> {
    let sim = cfg
        .sim
        .context("config needs a [simulation] section for validate")?;
    let t_grid = cfg.output.delay_grid();
    let u_grid = cfg.output.success_grid();

    let analytic_delay = delay_bounds_curve(&cfg.params, policy, &t_grid, &cfg.quad)?;
    let analytic_success = success_bounds_curve(&cfg.params, policy, &u_grid, &cfg.quad)?;
    let stats = run_experiment(&cfg.params, policy, InterfererModel::Original, &sim)?;
    let summary = aggregate(
        &stats,
        policy,
        &t_grid,
        &u_grid,
        sim.stability_queue_cap,
        cfg.params.p,
    );

    let mut worst: f64 = 0.0;
    let mut buf = Vec::new();
    writeln!(
        buf,
        "kind,x,empirical,emp_lower,emp_upper,analytic_lower,analytic_upper,violation"
    )?;
    for (analytic, empirical) in [
        (&analytic_delay, &summary.delay_cdf),
        (&analytic_success, &summary.success_cdf),
    ] {
        for i in 0..analytic.len() {
            let emp = empirical.value[i];
            let se2 = empirical.upper[i] - emp; // 2 standard errors
            let allowance = slack + se2;
            let violation = (analytic.lower[i] - allowance - emp)
                .max(emp - analytic.upper[i] - allowance)
                .max(0.0);
            worst = worst.max(violation);
            writeln!(
                buf,
                "{},{:.9},{emp:.9},{:.9},{:.9},{:.9},{:.9},{violation:.9}",
                analytic.kind.label(),
                analytic.grid[i],
                empirical.lower[i],
                empirical.upper[i],
                analytic.lower[i],
                analytic.upper[i],
            )?;
        }
    }
    let path = out.join(file_name("validate", policy, label));
    atomic_write(&path, &buf)?;
    println!(
        "{}: {} users, worst violation {worst:.6}",
        path.display(),
        summary.total_users
    );
    Ok(worst)
}
