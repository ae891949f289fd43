use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use obsinfer::experiment::{execute, resolve_workers, ExperimentConfig, ExperimentKind};
use obsinfer::Error;

#[derive(Parser)]
#[command(name = "obsinfer", version, about = "Inference functionals over observation operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo bias, variance, MSE and MAD of location estimators.
    Simulate(Common),
    /// Classical, observed and Godambe information with both gaps.
    InfoHierarchy(Common),
    /// Efficiency of the sinusoidal functional over a tuning grid.
    AreCurve(Common),
    /// Estimates with sandwich standard errors for one data set.
    Estimate(Common),
    /// Interval estimators across bin widths.
    IntervalStudy(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: config, then $OBSINFER_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination (default: config `output`, then stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(kind: ExperimentKind, args: Common) -> Result<(), Error> {
    let text = match &args.config {
        Some(path) => ExperimentConfig::read(path)?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::from_toml_for(&text, kind)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.workers == Some(0) {
        return Err(Error::Config("--workers must be positive".into()));
    }
    cfg.workers = resolve_workers(args.workers, cfg.workers);
    let artifact = execute(&cfg, &text)?;
    match args.out.or(cfg.output.clone()) {
        Some(path) => std::fs::write(&path, &artifact.csv).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => print!("{}", artifact.csv),
    }
    let mut stdout = std::io::stdout().lock();
    for line in &artifact.stdout {
        writeln!(stdout, "{line}")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::InfoHierarchy(a) => (ExperimentKind::InfoHierarchy, a),
        Command::AreCurve(a) => (ExperimentKind::AreCurve, a),
        Command::Estimate(a) => (ExperimentKind::Estimate, a),
        Command::IntervalStudy(a) => (ExperimentKind::IntervalStudy, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("obsinfer: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for configuration and i/o problems, 3 for numerical failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io(_) => 2,
        _ => 3,
    }
}
