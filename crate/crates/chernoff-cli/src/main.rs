//! Experiment runner: reproducible scheme studies driven by TOML configs.
//!
//! Exit codes: 0 when every verdict passes, 1 on failed verdicts or runtime
//! scheme errors, 2 on config validation errors.

// `!(x < y)` rejects NaN along with the ordered failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use experiments::{run_experiment, RunError};

#[derive(Parser)]
#[command(name = "chernoff", version, about = "Iterated one-step scheme experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write CSV/JSON reports.
    Run {
        config: PathBuf,
        /// Output directory for summary.json, errors.csv and snapshots.
        #[arg(long)]
        out: PathBuf,
        /// Worker cap; outputs are identical at every value.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Run a single ladder level.
        #[arg(long)]
        level_filter: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// List the available experiment kinds.
    ListExperiments,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ExperimentConfig::parse(&text).map_err(|e| format!("{e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for kind in ExperimentConfig::KINDS {
                println!("{kind}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match cfg.validate() {
                Ok(()) => {
                    println!("ok: {} ({})", config.display(), cfg.experiment);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Run {
            config,
            out,
            threads,
            level_filter,
        } => {
            if threads == 0 {
                eprintln!("error: --threads must be at least 1");
                return ExitCode::from(2);
            }
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_experiment(&cfg, level_filter) {
                Ok(report) => {
                    if let Err(e) = report.emit(&out) {
                        eprintln!("error: cannot write reports to {}: {e}", out.display());
                        return ExitCode::FAILURE;
                    }
                    for (name, ok) in &report.verdicts {
                        println!("{name}: {}", if *ok { "pass" } else { "fail" });
                    }
                    if report.passed() {
                        println!("pass: {}", cfg.experiment);
                        ExitCode::SUCCESS
                    } else {
                        println!("fail: {}", cfg.experiment);
                        ExitCode::FAILURE
                    }
                }
                Err(RunError::Config(e)) => {
                    eprintln!("invalid config: {e}");
                    ExitCode::from(2)
                }
                Err(e @ RunError::Runtime { .. }) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
