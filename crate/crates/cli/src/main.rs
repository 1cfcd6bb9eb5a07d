use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use opkin::exec::with_threads;
use opkin::io::{execute, replay, Command, Config};
use opkin::{Error, Execution};

/// Kinetic opinion-formation toolkit: Monte Carlo, Fokker-Planck and
/// closed-form steady states.
///
/// Exit status: 0 on success, 1 on invalid configuration, 2 on numerical
/// or I/O failure.
#[derive(Debug, Parser)]
#[command(name = "opkin", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Monte Carlo runs of the kinetic exchange model.
    Simulate(RunArgs),
    /// Finite-volume solution of a Fokker-Planck limit.
    FpSolve(RunArgs),
    /// Closed-form stationary density with residual and moment checks.
    SteadyState(RunArgs),
    /// Quasi-invariant limit sweep over gamma.
    LimitSweep(RunArgs),
    /// Closed moment equations against the PDE solver (and the kinetic
    /// spread decay when the model is noise free).
    MomentCheck(RunArgs),
    /// Replay a run from its manifest.
    Run(ReplayArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for replicas (outputs do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML configuration ([model], [noise], [initial], [numerics], [fp],
    /// [steady], [sweep], [output]).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides numerics.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn run(cli: Cli) -> Result<PathBuf, Error> {
    let (command, args) = match cli.command {
        Cmd::Run(args) => {
            let out = args.common.out.clone();
            with_threads(args.common.threads, || replay(&args.manifest, &out, Execution::default()))?;
            return Ok(out);
        }
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::FpSolve(a) => (Command::FpSolve, a),
        Cmd::SteadyState(a) => (Command::SteadyState, a),
        Cmd::LimitSweep(a) => (Command::LimitSweep, a),
        Cmd::MomentCheck(a) => (Command::MomentCheck, a),
    };
    let mut config = Config::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.numerics.seed = seed;
    }
    let out = args.common.out.clone();
    with_threads(args.common.threads, || execute(command, &config, &out, Execution::default()))?;
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            log::info!("outputs written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
