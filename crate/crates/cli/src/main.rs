//! `fmfg`: batch runner for the forward-utility portfolio games.
//!
//! Exit status: 0 on success, 2 when the game has no constant equilibrium,
//! 3 when `verify` rejects a strategy file, 1 for any other error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod format;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::VerificationFailed;

type Handler = fn(&config::RunConfig, &std::path::Path) -> Result<()>;

/// Overrides the worker thread count.
const THREADS_ENV: &str = "FMFG_THREADS";

#[derive(Parser)]
#[command(name = "fmfg", version, about = "Forward-utility n-player and mean-field portfolio games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
    /// Replaces every seed in the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Constant Nash equilibrium of the n-player game
    SolveN(RunArgs),
    /// Constant mean-field equilibrium
    SolveMfg(RunArgs),
    /// One agent's best response to a strategy profile
    BestResponse(RunArgs),
    /// Monte-Carlo martingale checks at the equilibrium
    Simulate(RunArgs),
    /// n-player to mean-field convergence sweep
    Converge(RunArgs),
    /// Rolled forward utility over a horizon schedule
    Roll(RunArgs),
    /// Nash residuals of the equilibrium.csv in the output directory
    Verify(RunArgs),
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let (args, handler): (&RunArgs, Handler) = match &cli.command {
        Command::SolveN(a) => (a, commands::solve_n),
        Command::SolveMfg(a) => (a, commands::solve_mfg),
        Command::BestResponse(a) => (a, commands::best_response_cmd),
        Command::Simulate(a) => (a, commands::simulate),
        Command::Converge(a) => (a, commands::converge),
        Command::Roll(a) => (a, commands::roll),
        Command::Verify(a) => (a, commands::verify),
    };
    let mut cfg = config::load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    handler(&cfg, &args.out)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 3;
    }
    let degenerate = err
        .chain()
        .filter_map(|e| e.downcast_ref::<fmfg_core::Error>())
        .any(|e| e.is_degenerate());
    if degenerate {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
