//! `bvmfg`: run the mean-field game experiments from a configuration file
//! and write CSV artifacts with a hashed manifest.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Command, Session};
use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "bvmfg", version, about = "Bounded-velocity mean field game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Configuration file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (all cores when absent). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Log stage progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Damped fixed point of the best-response map.
    SolveMfg,
    /// Values for a ladder of velocity bounds against the top equilibrium.
    SweepTheta,
    /// Coupling error and Nash gaps over the number of players.
    SweepN,
    /// Gaps of bounded-velocity policies against finite-variation deviations.
    FvGap,
    /// Spot checks of the model assumptions.
    CheckAssumptions,
    /// Every experiment above, one subdirectory each.
    ReproduceAll,
    /// Recompute the hashes listed in `<out>/manifest.json`.
    Verify,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(config::ConfigError {
                    line: None,
                    key: None,
                    message: format!("cannot read {}: {e}", path.display()),
                })
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let command = match cli.command {
        Cmd::Verify => {
            let bad = manifest::verify(&cli.out).map_err(CliError::Other)?;
            return if bad.is_empty() {
                println!("all outputs match {}", cli.out.join(manifest::MANIFEST_FILE).display());
                Ok(())
            } else {
                Err(CliError::Verification(bad))
            };
        }
        Cmd::SolveMfg => Command::SolveMfg,
        Cmd::SweepTheta => Command::SweepTheta,
        Cmd::SweepN => Command::SweepN,
        Cmd::FvGap => Command::FvGap,
        Cmd::CheckAssumptions => Command::CheckAssumptions,
        Cmd::ReproduceAll => Command::ReproduceAll,
    };
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let threads = rayon::current_num_threads();
    let mut session = Session::new(&cli.out)?;
    commands::run(command, &cfg, &mut session)?;
    session.finish(command, &cfg, threads)?;
    println!("{} finished, outputs in {}", command.name(), cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
