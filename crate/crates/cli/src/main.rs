//! Command-line experiment runner for the rotgauge library.
//!
//! `rotgauge run <config.toml>` executes one named experiment, prints a
//! status line, and writes `summary.json` plus CSV tables into the output
//! directory. Exit codes: 0 the experiment passed, 1 it ran but failed its
//! thresholds, 2 the config was invalid or the run errored.

mod config;
mod output;
mod runners;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, EXPERIMENTS, SCHEMA_TEXT};
use output::{write_artifacts, RunSummary, Status};

#[derive(Parser)]
#[command(
    name = "rotgauge",
    version,
    about = "Numerical experiments on gauge-fixed planar mechanics in rotating frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
    },
    /// List the available experiments.
    List,
    /// Print the documented config-file schema.
    Schema,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, blurb) in EXPERIMENTS {
                println!("{name:<18} {blurb}");
            }
            ExitCode::SUCCESS
        }
        Command::Schema => {
            print!("{SCHEMA_TEXT}");
            ExitCode::SUCCESS
        }
        Command::Run { config } => match run(&config) {
            Ok(Status::Pass) => ExitCode::SUCCESS,
            Ok(Status::Fail) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}

fn run(path: &PathBuf) -> Result<Status> {
    let cfg = ExperimentConfig::load(path)?;
    let out_dir = std::env::var("ROTGAUGE_OUTPUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from(&cfg.output_dir));

    let start = Instant::now();
    let outcome = runners::run_experiment(&cfg)?;
    let wall = start.elapsed().as_secs_f64();

    let mut summary = RunSummary {
        experiment: cfg.experiment.clone(),
        config_path: path.display().to_string(),
        status: outcome.status,
        reason: outcome.reason.clone(),
        seed: cfg.seed,
        metrics: outcome.metrics,
        artifacts: Vec::new(),
        wall_time_seconds: wall,
    };
    write_artifacts(&out_dir, &mut summary, &outcome.tables)?;

    println!(
        "{}: {} — {} (artifacts in {})",
        cfg.experiment,
        outcome.status.as_str(),
        outcome.reason,
        out_dir.display()
    );
    Ok(outcome.status)
}
