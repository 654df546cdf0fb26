//! Scenario-driven front end for contact reduction: verify scaling
//! symmetries, construct reduced contact systems, integrate trajectories,
//! certify original/reduced equivalence, and sweep parameter grids.
//!
//! Exit codes: 0 pass, 1 check/compare failure, 2 usage/schema error,
//! 3 numerical failure.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::Ctx;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "contact-reduce",
    about = "Contact reduction of scaling-symmetric Hamiltonian systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSVs, reports and reduced-system files.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,

    /// Seed for sample-point generation.
    #[arg(long, default_value_t = 42, global = true)]
    seed: u64,

    /// Residual tolerance for verdicts.
    #[arg(long, default_value_t = 1e-6, global = true)]
    tol: f64,

    /// Suppress non-essential output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the scaling-symmetry conditions for a system.
    Check,
    /// Construct a reduced contact system and write its description.
    Reduce,
    /// Integrate a trajectory and write it as CSV.
    Run,
    /// Certify trajectory-level equivalence of original and reduced dynamics.
    Compare,
    /// Run a grid of scenarios concurrently and summarize.
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config PATH is required");
            return ExitCode::from(2);
        }
    };
    let cfg = match config::load(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = Ctx {
        cfg,
        out_dir: cli.out.clone(),
        seed: cli.seed,
        tol: cli.tol,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Check => commands::cmd_check(&ctx),
        Command::Reduce => commands::cmd_reduce(&ctx),
        Command::Run => commands::cmd_run(&ctx),
        Command::Compare => commands::cmd_compare(&ctx),
        Command::Sweep => commands::cmd_sweep(&ctx),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}

/// Schema/usage problems exit 2; runtime numerics exit 3.
fn classify(e: &anyhow::Error) -> u8 {
    if let Some(lib) = e.downcast_ref::<contact_reduce::Error>() {
        use contact_reduce::Error as E;
        return match lib {
            E::Parse { .. }
            | E::Contract(_)
            | E::UnknownSystem(_)
            | E::MissingParam(_)
            | E::Validation(_) => 2,
            E::Domain { .. }
            | E::Guard(_)
            | E::NonFinite(_)
            | E::Regularity { .. }
            | E::Numerical(_) => 3,
        };
    }
    2
}
