//! `cauchy-fde`: sample spectra, fit models, recover ranks, evaluate
//! densities and determination gaps from a JSON experiment config.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{ExperimentConfig, SCHEMA};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "cauchy-fde", version, about = "Random matrix model fitting with the Cauchy noise loss")]
struct Cli {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent seeds and cells (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for output files (default: config output_dir, else ".").
    #[arg(long, global = true, env = "CAUCHY_FDE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw model spectra, one CSV per seed.
    Sample,
    /// Fit model parameters by projected online gradient descent.
    Estimate,
    /// Run the rank-recovery sweep.
    Recover,
    /// Write the gamma-slice of the model on a grid.
    Density,
    /// Measure the determination gap.
    Gap,
    /// Print the config JSON schema.
    Schema,
    /// Print the config with every default filled in.
    ShowConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Estimate => "estimate",
            Command::Recover => "recover",
            Command::Density => "density",
            Command::Gap => "gap",
            Command::Schema => "schema",
            Command::ShowConfig => "show-config",
        }
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn print_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Schema = cli.command {
        return print_stdout(SCHEMA);
    }
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    config.validate(cli.command.name())?;
    if let Command::ShowConfig = cli.command {
        let text = serde_json::to_string_pretty(&config).expect("config serializes");
        return print_stdout(&format!("{text}\n"));
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let output_dir = cli
        .output_dir
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context { config, output_dir, command: cli.command.name() };
    match cli.command {
        Command::Sample => commands::sample(&ctx),
        Command::Estimate => commands::estimate(&ctx),
        Command::Recover => commands::recover(&ctx),
        Command::Density => commands::density(&ctx),
        Command::Gap => commands::gap(&ctx),
        Command::Schema | Command::ShowConfig => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cauchy-fde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
