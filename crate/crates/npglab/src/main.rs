//! Thin CLI over the library's command entry points.
//!
//! Exit codes: 0 success, 1 error or failed verification, 2 when a run
//! halted early because the policy logits saturated.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "npglab",
    version,
    about = "Natural policy gradient laboratory: exact measurement on finite MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the config's RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its per-iteration measurement CSV
    Run(CommonArgs),
    /// Run every cell of the config's sweep axis in parallel
    Sweep(CommonArgs),
    /// Run one experiment and render the gap-vs-bound curves as SVG
    Plot(CommonArgs),
    /// Run one experiment and audit the convergence-theory inequalities
    Verify(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => npglab::runner::cmd_run(&a.config, &a.out, a.seed),
        Command::Sweep(a) => npglab::runner::cmd_sweep(&a.config, &a.out, a.seed),
        Command::Plot(a) => npglab::runner::cmd_plot(&a.config, &a.out, a.seed),
        Command::Verify(a) => npglab::runner::cmd_verify(&a.config, &a.out, a.seed),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(npglab::runner::EXIT_ERROR as u8)
        }
    }
}
