use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fdia::commands::{run, CommandKind, RunOptions};

#[derive(Parser)]
#[command(name = "fdia", version, about = "Stealthy sensor-attack synthesis and certification for feedback loops")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack-free ensemble traces.
    Simulate(Common),
    /// Attack campaigns with their counterfactuals.
    Attack(Common),
    /// Stability probes, vulnerability verdict, stealth bound and empirical KL.
    Analyze(Common),
    /// ROC and error sum of the χ² detector, with coin and likelihood-ratio baselines.
    Detect(Common),
    /// Bound, crossing time and error sum over the configured `s0` norms.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Ensemble size (simulate, attack).
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
}

fn main() -> ExitCode {
    // Usage errors are validation errors; clap's own exit code would be 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, c) = match cli.command {
        Command::Simulate(c) => (CommandKind::Simulate, c),
        Command::Attack(c) => (CommandKind::Attack, c),
        Command::Analyze(c) => (CommandKind::Analyze, c),
        Command::Detect(c) => (CommandKind::Detect, c),
        Command::Sweep(c) => (CommandKind::Sweep, c),
    };
    let opts = RunOptions {
        command,
        config: c.config,
        out: c.out,
        seed: c.seed,
        ensemble: c.ensemble,
        horizon: c.horizon,
    };
    match run(&opts) {
        Ok(outcome) => {
            println!("{command}: {} ({})", outcome.summary, outcome.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
