use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qmetro::config::resolve;
use qmetro::run::{cmd_analytic, cmd_calibrate, cmd_experiment, cmd_sweep, Context};
use qmetro::CliError;

#[derive(Debug, Parser)]
#[command(name = "qmetro", version, about = "Rydberg-gated GHZ metrology: analytic model and Monte-Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override one key, e.g. `--set experiment.nu=100`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Report exact expectation values instead of sampling outcomes.
    #[arg(long, global = true)]
    ninf: bool,
    /// Stop a sweep after this many new cells.
    #[arg(long, global = true, hide = true)]
    stop_after: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Outcome tables, fringes, Fisher information and sensitivity.
    Analytic,
    /// One Monte-Carlo fringe scan with fit and sensitivity.
    Experiment,
    /// Experiment runs over a grid of configuration values.
    Sweep,
    /// Calibrate the gate pulse amplitude.
    Calibrate,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut sets = cli.sets.clone();
    if let Some(seed) = cli.seed {
        sets.push(format!("seed={seed}"));
    }
    if cli.ninf {
        sets.push("experiment.probabilities_only=true".into());
    }
    let resolved = resolve(cli.config.as_deref(), std::env::vars(), &sets)?;
    let ctx = Context { resolved, config_path: cli.config, out: cli.out, jobs: cli.jobs, stop_after: cli.stop_after };
    let manifest = match cli.command {
        Command::Analytic => cmd_analytic(&ctx)?,
        Command::Experiment => cmd_experiment(&ctx)?,
        Command::Sweep => cmd_sweep(&ctx)?,
        Command::Calibrate => cmd_calibrate(&ctx)?,
    };
    eprintln!("wrote {} file(s) to {}", manifest.outputs.len(), ctx.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as invalid configuration.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
