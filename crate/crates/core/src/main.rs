use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coupled_tug::cli::{run, Subcommand as Cmd};

#[derive(Parser)]
#[command(name = "coupled-tug", version, about = "Tug-of-war solver and diagnostics for coupled infinity-Laplace systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the DPP on a lattice; writes field.csv, solve.json and PGM heatmaps.
    Solve(Common),
    /// Monte Carlo game value; writes simulate.json and optional trace.csv.
    Simulate(Common),
    /// Slope, monotonicity, comparison, Lipschitz and blow-up diagnostics.
    Analyze(Common),
    /// Tabulate a generalized cone pair and its radial residual.
    Cones(Common),
    /// Tabulate mode-switch probabilities.
    Markov(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, c) = match cli.command {
        Command::Solve(c) => (Cmd::Solve, c),
        Command::Simulate(c) => (Cmd::Simulate, c),
        Command::Analyze(c) => (Cmd::Analyze, c),
        Command::Cones(c) => (Cmd::Cones, c),
        Command::Markov(c) => (Cmd::Markov, c),
    };
    ExitCode::from(run(cmd, &c.config, &c.out, c.seed) as u8)
}
