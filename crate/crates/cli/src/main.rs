use std::path::PathBuf;
use std::process::ExitCode;

use asir_cli::{run_file, Mode, RunOptions};
use clap::{Args, Parser, Subcommand};

/// Compartmental SIR and agent-based ASIR epidemic experiments.
#[derive(Parser)]
#[command(name = "asir", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unit-step Euler and RK4 reference curves.
    Sir(Common),
    /// Stationary distribution, ergodicity and meetup probability of the map.
    Stationary(Common),
    /// Deduce agent parameters from SIR rates.
    Deduce(Common),
    /// Run agent-based replicates and write trajectories.
    Asir(Common),
    /// Ensemble vs unit-step SIR equivalence check. Exit 1 on FAIL.
    Verify(Common),
    /// Sparse-grid experiment plus its well-mixed contrast.
    FailureMode(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.directory`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensembles.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Sir(c) => (Mode::Sir, c),
        Command::Stationary(c) => (Mode::Stationary, c),
        Command::Deduce(c) => (Mode::Deduce, c),
        Command::Asir(c) => (Mode::Asir, c),
        Command::Verify(c) => (Mode::Verify, c),
        Command::FailureMode(c) => (Mode::FailureMode, c),
    };
    let options = RunOptions {
        out_dir: common.out,
        workers: common.workers.map(|w| w as usize),
    };
    let code = match run_file(mode, &common.config, &options) {
        Ok(outcome) => outcome.exit_code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
