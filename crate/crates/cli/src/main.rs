//! Batch front end for the rank-constrained feasibility toolkit.
//!
//! Subcommands: `generate` plants an instance on disk, `solve` runs one
//! solver from instance files, `angle` prints the regularity report at a
//! base point, `rate` fits the empirical linear rate of a trace file,
//! `experiment` runs a config-file cross product, and `emit-plots` turns a
//! ledger into plot-ready CSVs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rankfeas::constraint::ConstraintSet;
use rankfeas::diagnostics::{angle_constant, angle_constant_sampled, fit_linear_rate};
use rankfeas::error::Error;
use rankfeas::harness::{
    emit_plot_data, generate_instance, run_experiment, run_single, starting_point, ConstraintKind,
    ExperimentConfig, ExperimentLedger, InstanceFiles,
};
use rankfeas::matrix::{fmt_f64, Matrix};
use rankfeas::rank_set::RankSetSpec;
use rankfeas::solver::{Algorithm, InexactStrategy, IterateTrace, SolverConfig};
use rankfeas::tol::Tolerances;

#[derive(Parser)]
#[command(name = "rankfeas", version, about = "Rank-constrained feasibility experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plant a feasible instance and write its files to a directory.
    Generate(GenerateArgs),
    /// Run one solver from instance files and write the trace.
    Solve(SolveArgs),
    /// Print the regularity report for an instance at a base point.
    Angle(AngleArgs),
    /// Fit the empirical linear rate of a serialized trace.
    Rate(RateArgs),
    /// Run the full cross product described by a config file.
    Experiment(ExperimentArgs),
    /// Emit per-run and summary CSVs from a ledger.
    EmitPlots(EmitPlotsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Config file to take dimensions and constraint kind from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    s: usize,
    /// Constraint kind: affine or magnitude.
    #[arg(long, default_value = "affine")]
    kind: String,
    /// Measurement count for the affine kind (defaults to the oversampling
    /// heuristic).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Directory holding x_star.mat / constraint.txt / instance.txt.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "ap")]
    algorithm: String,
    /// Rank bound; defaults to the value recorded with the instance.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value = "exact")]
    strategy: String,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    stop_gap: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Distance of the perturbed start from the planted point.
    #[arg(long, default_value_t = 0.05)]
    start_distance: f64,
    /// Run identifier stamped into the output files.
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AngleArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Base point file; defaults to the planted point of the instance.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    s: Option<usize>,
    /// Sample budget for the magnitude-set estimate.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RateArgs {
    /// Serialized trace file.
    trace: PathBuf,
    /// Predicted rate to check compliance against.
    #[arg(long)]
    predicted: Option<f64>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory from the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmitPlotsArgs {
    /// Path to ledger.txt; trace paths are resolved relative to its parent.
    #[arg(long)]
    ledger: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::MissingTrace { .. } => 4,
        Error::NumericalFailure { .. } | Error::Diverged { .. } | Error::RayMiss { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Solve(args) => solve(args),
        Command::Angle(args) => angle(args),
        Command::Rate(args) => rate(args),
        Command::Experiment(args) => experiment(args),
        Command::EmitPlots(args) => emit_plots(args),
    }
}

/// Minimal experiment config carrying just what instance generation needs.
fn generation_config(m: usize, n: usize, s: usize, kind: ConstraintKind, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        m,
        n,
        s,
        kind,
        algorithms: vec![Algorithm::AlternatingProjections],
        gammas: vec![0.0],
        seeds: vec![seed],
        start_distances: vec![0.05],
        stop_gap: 1e-10,
        max_iters: 10_000,
        strategy: InexactStrategy::Exact,
        tolerances: Tolerances::default(),
        out_dir: PathBuf::from("."),
        angle_samples: 2000,
    }
}

fn generate(args: GenerateArgs) -> Result<(), Error> {
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?)?,
        None => {
            let kind = match args.kind.as_str() {
                "affine" => ConstraintKind::Affine {
                    p: args.p.unwrap_or_else(|| {
                        rankfeas::harness::default_measurement_count(args.m, args.n, args.s)
                    }),
                },
                "magnitude" => ConstraintKind::Magnitude,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown constraint kind '{other}'"
                    )))
                }
            };
            generation_config(args.m, args.n, args.s, kind, args.seed)
        }
    };
    let (x_star, constraint) = generate_instance(&cfg, args.seed)?;
    InstanceFiles::write(&args.out, &cfg, args.seed, &x_star, &constraint)?;
    println!(
        "instance seed={} kind={} dims={}x{} s={} written to {}",
        args.seed,
        constraint.kind(),
        cfg.m,
        cfg.n,
        cfg.s,
        args.out.display()
    );
    Ok(())
}

fn solve(args: SolveArgs) -> Result<(), Error> {
    let (x_star, constraint, meta) = InstanceFiles::read(&args.instance)?;
    let s = args.s.unwrap_or(meta.s);
    let spec = RankSetSpec::new(s);
    let algorithm = Algorithm::from_name(&args.algorithm)?;
    let cfg = SolverConfig {
        gamma: args.gamma,
        max_iters: args.max_iters,
        stop_gap: args.stop_gap,
        seed: args.seed,
        inexact_strategy: InexactStrategy::from_name(&args.strategy)?,
        keep_points: false,
    };
    let x0 = starting_point(&x_star, &spec, args.seed, 0, args.start_distance)?;
    let mut trace = run_single(algorithm, &spec, &constraint, &x0, &cfg)?;
    trace.run_id = args.run_id.unwrap_or_else(|| {
        format!(
            "{}-g{}-seed{}-d{}",
            algorithm.name(),
            fmt_f64(args.gamma),
            args.seed,
            fmt_f64(args.start_distance)
        )
    });
    std::fs::create_dir_all(&args.out)?;
    let trace_path = args.out.join(format!("{}.trace", trace.run_id));
    let csv_path = args.out.join(format!("{}.csv", trace.run_id));
    std::fs::write(&trace_path, trace.to_text())?;
    std::fs::write(&csv_path, trace.to_csv())?;
    println!(
        "run {} converged={} iterations={} final_residual_M={} trace={}",
        trace.run_id,
        trace.converged,
        trace.iterations(),
        fmt_f64(constraint.residual(&trace.final_point)),
        trace_path.display()
    );
    Ok(())
}

fn angle(args: AngleArgs) -> Result<(), Error> {
    let (x_star, constraint, meta) = InstanceFiles::read(&args.instance)?;
    let base = match &args.base {
        Some(path) => Matrix::from_text(&std::fs::read_to_string(path)?)?,
        None => x_star,
    };
    let spec = RankSetSpec::new(args.s.unwrap_or(meta.s));
    let report = match &constraint {
        ConstraintSet::Affine(aff) => angle_constant(&base, &spec, aff)?,
        ConstraintSet::Magnitude(mag) => {
            angle_constant_sampled(&base, &spec, mag, args.samples, args.seed)?
        }
    };
    println!("c_bar {}", fmt_f64(report.c_bar));
    println!("angle_rad {}", fmt_f64(report.angle_rad));
    println!("strongly_regular {}", report.strongly_regular);
    println!("method {}", report.method.name());
    println!("degenerate_cone {}", report.degenerate_cone);
    Ok(())
}

fn rate(args: RateArgs) -> Result<(), Error> {
    let trace = IterateTrace::from_text(&std::fs::read_to_string(&args.trace)?)?;
    let predicted = args.predicted.unwrap_or(f64::NAN);
    let report = fit_linear_rate(&trace, None, predicted)?;
    println!("empirical_rate {}", fmt_f64(report.empirical_rate));
    println!("predicted_rate {}", fmt_f64(report.predicted_rate));
    println!("fit_window {} {}", report.fit_window.0, report.fit_window.1);
    println!("fit_residual {}", fmt_f64(report.fit_residual));
    println!("compliant {}", report.compliant);
    println!("truncated_window {}", report.truncated_window);
    println!("insufficient_decay {}", report.insufficient_decay);
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::parse(&std::fs::read_to_string(&args.config)?)?;
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    let ledger = run_experiment(&cfg)?;
    let converged = ledger.runs.iter().filter(|r| r.converged).count();
    let compliant = ledger.runs.iter().filter(|r| r.compliant).count();
    println!(
        "experiment complete: {} runs, {} converged, {} rate-compliant, ledger at {}",
        ledger.runs.len(),
        converged,
        compliant,
        cfg.out_dir.join("ledger.txt").display()
    );
    Ok(())
}

fn emit_plots(args: EmitPlotsArgs) -> Result<(), Error> {
    let ledger = ExperimentLedger::from_text(&std::fs::read_to_string(&args.ledger)?)?;
    let dir = args
        .ledger
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let written = emit_plot_data(&ledger, &dir)?;
    println!("wrote {} plot files under {}", written.len(), dir.join("plots").display());
    Ok(())
}
