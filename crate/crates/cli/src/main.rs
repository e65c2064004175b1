use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dasep_core::config::{parse_config, ExperimentKind, SEED_ENV};
use dasep_core::experiment::run_experiment_with;

#[derive(Parser)]
#[command(name = "dasep-lab", version, about = "Dynamic ASEP experiments: simulation, verification and scaling-limit comparison")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble and write snapshots.
    Simulate(RunArgs),
    /// Sampler goodness of fit, dynamic invariance and marginal variance.
    Stationary(RunArgs),
    /// Exhaustive check of the microscopic generator identity.
    VerifyGenerator(RunArgs),
    /// Martingale, bracket and Duhamel checks.
    VerifyMartingale(RunArgs),
    /// Heat kernel identities and bounds.
    VerifyKernels(RunArgs),
    /// OU solver checks.
    Spde(RunArgs),
    /// Line ensembles against the stationary OU solution.
    Converge(RunArgs),
    /// Generalized ring ensembles against the periodic OU solution.
    PeriodicConverge(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; takes precedence over the environment and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Simulate(a) => (ExperimentKind::Simulate, a),
            Command::Stationary(a) => (ExperimentKind::Stationary, a),
            Command::VerifyGenerator(a) => (ExperimentKind::VerifyGenerator, a),
            Command::VerifyMartingale(a) => (ExperimentKind::VerifyMartingale, a),
            Command::VerifyKernels(a) => (ExperimentKind::VerifyKernels, a),
            Command::Spde(a) => (ExperimentKind::SolveSpde, a),
            Command::Converge(a) => (ExperimentKind::Converge, a),
            Command::PeriodicConverge(a) => (ExperimentKind::PeriodicConverge, a),
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (kind, args) = cli.command.split();
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("invalid config {}", args.config.display()))?;
    if cfg.kind != kind {
        bail!("{} declares experiment `{}`, not `{kind}`", args.config.display(), cfg.kind);
    }
    if let Some(dir) = args.out {
        cfg.out_dir = dir;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    let env_seed = match args.seed {
        Some(s) => {
            cfg.seed = s;
            None
        }
        None => std::env::var(SEED_ENV).ok(),
    };
    let manifest = run_experiment_with(&cfg, env_seed.as_deref())?;
    for c in &manifest.checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag}  {}: {} (threshold {}) {}", c.name, c.value, c.threshold, c.detail);
    }
    println!(
        "{} files in {}, {} events, {:.2} s",
        manifest.files.len(),
        cfg.out_dir.display(),
        manifest.event_count,
        manifest.wall_clock_s
    );
    Ok(manifest.pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
