//! `qmeas`: ensemble simulation and closed-form queries for a cavity mode under
//! simultaneous photon counting and homodyne detection.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qmeas::analytics::{generating_function, joint_density_checked, record_moments, GFQuery};
use qmeas::ensemble::{
    compare_oracle, run_ensemble, write_curve_csv, write_histogram_csv, write_trajectories_jsonl,
    EnsembleStats, OracleThresholds, RunConfig,
};
use qmeas::sde::MixtureMode;
use qmeas::states::{fmt_complex, parse_complex};
use qmeas::{Error, RecordAccumulators, SimParams, StateModel, StateRegistry};

const EXIT_CONFIG: u8 = 2;
const EXIT_GUARD: u8 = 3;
const EXIT_ORACLE: u8 = 4;

#[derive(Parser)]
#[command(name = "qmeas", version, about = "Photon counting + homodyne trajectories of a damped cavity mode")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write curve, histogram and trajectory files.
    Simulate(SimulateArgs),
    /// Run an ensemble and compare it with the closed-form laws.
    Oracle(OracleArgs),
    /// Evaluate the generating function and the record moments.
    Gf(GfArgs),
    /// Evaluate the log joint density of a record.
    Pdf(PdfArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Initial state, e.g. `coherent:alpha=1+0i`, `number:n=3`, `thermal:nbar=3`,
    /// `squeezed:alpha=1+0i,r=1.2`.
    #[arg(long)]
    init: String,
    #[arg(long, default_value_t = 1.0)]
    gamma1: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma2: f64,
    #[arg(long, default_value_t = 0.0)]
    omega: f64,
    /// Truncation dimension; defaults to the state's adaptive choice.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long = "t-final", default_value_t = 4.0)]
    t_final: f64,
    #[arg(long, default_value_t = 10_000)]
    trajectories: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Steps between curve snapshots; default gives twenty snapshots.
    #[arg(long)]
    stride: Option<usize>,
    /// How a thermal mixture is carried along a trajectory.
    #[arg(long = "thermal-mode", value_enum, default_value_t = ThermalMode::Branches)]
    thermal_mode: ThermalMode,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThermalMode {
    /// Every number-state branch conditioned on one shared record.
    Branches,
    /// One number state drawn per trajectory.
    Sampled,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
    /// Include the full dW record of every trajectory in trajectories.jsonl.
    #[arg(long)]
    dw: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write the run's output files here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    curve_z: f64,
    #[arg(long, default_value_t = 3.0)]
    moment_z: f64,
    /// Exit with status 4 when any comparison fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct GfArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Homodyne test function, constant on (0, t).
    #[arg(long, default_value = "0")]
    xi: String,
    /// Photocount test function, constant on (0, t).
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long)]
    t: f64,
}

#[derive(Args)]
struct PdfArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of photocounts.
    #[arg(long)]
    m: i64,
    #[arg(long)]
    t: f64,
    /// Value of the homodyne accumulator A(t).
    #[arg(long = "A")]
    a: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Simulate(a) => simulate(a),
        Command::Oracle(a) => oracle(a),
        Command::Gf(a) => gf(a),
        Command::Pdf(a) => pdf(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numerical_guard() => EXIT_GUARD,
        Error::Io(_) | Error::Trajectory { .. } => 1,
        _ => EXIT_CONFIG,
    }
}

fn model(args: &ModelArgs) -> qmeas::Result<(Arc<dyn StateModel>, usize)> {
    let init = StateRegistry::builtin().parse(&args.init)?;
    let dim = args.dim.unwrap_or_else(|| init.default_dim());
    Ok((init, dim))
}

fn params(args: &ModelArgs, dim: usize, dt: f64, t_final: f64, seed: u64) -> qmeas::Result<SimParams> {
    let p = SimParams { gamma1: args.gamma1, gamma2: args.gamma2, omega: args.omega, dt, t_final, dim, seed };
    p.validate()?;
    Ok(p)
}

fn run(args: &RunArgs, keep_summaries: bool, keep_record: bool) -> qmeas::Result<(Arc<dyn StateModel>, EnsembleStats)> {
    let (init, dim) = model(&args.model)?;
    let p = params(&args.model, dim, args.dt, args.t_final, args.seed)?;
    let mut cfg = RunConfig::new(init.clone(), p, args.trajectories);
    if let Some(s) = args.stride {
        if s == 0 || s as f64 * args.dt > args.t_final {
            return Err(Error::Config(format!("stride {s} must satisfy 0 < stride·dt <= t-final")));
        }
        cfg.snapshot_stride = s;
    }
    cfg.mixture = match args.thermal_mode {
        ThermalMode::Branches => MixtureMode::Branches,
        ThermalMode::Sampled => MixtureMode::Sampled,
    };
    cfg.keep_summaries = keep_summaries;
    cfg.keep_record = keep_record;
    let start = Instant::now();
    let stats = run_ensemble(&cfg)?;
    eprintln!(
        "{}: {} trajectories, D = {}, {:.2} s",
        init.describe(),
        args.trajectories,
        dim,
        start.elapsed().as_secs_f64()
    );
    Ok((init, stats))
}

fn write_outputs(stats: &EnsembleStats, dir: &Path) -> qmeas::Result<()> {
    fs::create_dir_all(dir)?;
    write_curve_csv(stats, &dir.join("curve.csv"))?;
    write_histogram_csv(&stats.count_histogram, &dir.join("histogram.csv"))?;
    if !stats.summaries.is_empty() {
        write_trajectories_jsonl(&stats.summaries, &dir.join("trajectories.jsonl"))?;
    }
    if let Some(h) = &stats.sampled_n_histogram {
        write_histogram_csv(h, &dir.join("sampled_n.csv"))?;
    }
    let json = serde_json::to_string_pretty(stats).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("stats.json"), json + "\n")?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> qmeas::Result<ExitCode> {
    let (_, stats) = run(&a.run, true, a.dw)?;
    write_outputs(&stats, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn oracle(a: OracleArgs) -> qmeas::Result<ExitCode> {
    let (init, stats) = run(&a.run, a.out.is_some(), false)?;
    if let Some(dir) = &a.out {
        write_outputs(&stats, dir)?;
    }
    let thresholds = OracleThresholds { decay_curve: a.curve_z, moments: a.moment_z };
    let report = compare_oracle(&stats, init.as_ref(), &stats.params, thresholds)?;
    print!("{}", report.render());
    if a.strict && !report.passed() {
        eprintln!("oracle comparison failed");
        return Ok(ExitCode::from(EXIT_ORACLE));
    }
    Ok(ExitCode::SUCCESS)
}

fn gf(a: GfArgs) -> qmeas::Result<ExitCode> {
    let (init, dim) = model(&a.model)?;
    let p = params(&a.model, dim, 1e-3, a.t, 0)?;
    let xi = parse_complex(&a.xi)?;
    let m = generating_function(init.as_ref(), &GFQuery::scalar(xi, a.eta, a.t)?, &p)?;
    let mo = record_moments(init.as_ref(), a.t, &p)?;
    println!("M = {}", fmt_complex(m));
    println!("E[N] = {}", mo.mean_n);
    println!("Var[N] = {}", mo.var_n);
    println!("E[A] = {}", fmt_complex(mo.mean_a));
    println!("E|A-EA|^2 = {}", mo.var_a);
    Ok(ExitCode::SUCCESS)
}

fn pdf(a: PdfArgs) -> qmeas::Result<ExitCode> {
    let (init, dim) = model(&a.model)?;
    let p = params(&a.model, dim, 1e-3, if a.t.is_finite() { a.t } else { 1.0 }, 0)?;
    let acc = RecordAccumulators::at(parse_complex(&a.a)?, a.t, &p);
    let log_p = joint_density_checked(init.as_ref(), a.m, &acc, &p, 1e-8)?;
    println!("log p_m = {log_p}");
    Ok(ExitCode::SUCCESS)
}
