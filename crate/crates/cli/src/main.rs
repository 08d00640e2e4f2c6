//! `looptree` command-line front end.

mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::CommandKind;
use config::Settings;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "looptree",
    version,
    about = "Random loops with crosses and double bars on trees"
)]
struct Cli {
    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a tree (regular, k-ary or one Galton-Watson draw) as CSV.
    GenTree(Settings),
    /// Depth-D survival frequencies over a grid of link rates.
    Survival(Settings),
    /// Rate at which depth-D survival crosses a target level.
    Threshold(Settings),
    /// Paired comparison of loop, delayed-pruning and link survival.
    Dominate(Settings),
    /// Pruning probabilities over a grid of degrees, rates and cross weights.
    PruneProb(Settings),
    /// Generating-function criteria for a Galton-Watson offspring law.
    GwtCheck(Settings),
    /// Effective conductance profile and branching-number estimate.
    Conductance(Settings),
    /// Branching number before and after link percolation plus delayed pruning.
    #[command(name = "probe-53")]
    Probe53(Settings),
    /// Uni-link count of the root's multi-link loop on Galton-Watson trees.
    Unilink(Settings),
}

impl Command {
    fn split(self) -> (CommandKind, Settings) {
        match self {
            Command::GenTree(s) => (CommandKind::GenTree, s),
            Command::Survival(s) => (CommandKind::Survival, s),
            Command::Threshold(s) => (CommandKind::Threshold, s),
            Command::Dominate(s) => (CommandKind::Dominate, s),
            Command::PruneProb(s) => (CommandKind::PruneProb, s),
            Command::GwtCheck(s) => (CommandKind::GwtCheck, s),
            Command::Conductance(s) => (CommandKind::Conductance, s),
            Command::Probe53(s) => (CommandKind::Probe53, s),
            Command::Unilink(s) => (CommandKind::Unilink, s),
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (kind, flags) = cli.command.split();
    let settings = match &cli.config {
        Some(path) => flags.merged_over(Settings::load(path)?),
        None => flags,
    };
    if let Some(n) = settings.threads {
        config::check(n >= 1, "threads", "must be at least 1")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("`threads`: {e}")))?;
    }
    let started = Instant::now();
    let output = commands::run(kind, &settings)?;
    let resolved = commands::with_defaults(kind, &settings);
    match &settings.out {
        Some(path) => {
            let metadata = json!({
                "command": kind.name(),
                "version": env!("CARGO_PKG_VERSION"),
                "csv_format_version": output::CSV_FORMAT_VERSION,
                "columns": kind.header(),
                "seed": resolved.seed,
                "threads": settings.threads.unwrap_or_else(rayon::current_num_threads),
                "config": resolved,
                "wall_time_seconds": started.elapsed().as_secs_f64(),
                "summary": output.summary,
            });
            output::write_artifacts(path, &output.csv, &metadata)
        }
        None => {
            std::io::stdout().lock().write_all(output.csv.as_bytes())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("looptree: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
