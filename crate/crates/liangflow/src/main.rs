use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use liangflow::harness::{emit_csv, parse_config, run_experiment, SweepConfig};
use liangflow::model::critical_field;

/// Liang information flow across quantum phase transitions in spin chains.
#[derive(Parser)]
#[command(name = "liangflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write its CSV table.
    Run {
        /// Path to a flat `key = value` config file.
        config: PathBuf,
        /// Override the output path from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the worker count (0 = one worker per core).
        #[arg(long)]
        workers: Option<usize>,
        /// Reserved. Runs are deterministic; no randomness is used anywhere.
        #[arg(long)]
        seedless: bool,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
    /// Print the critical transverse field B_c for a given kappa.
    CriticalField {
        #[arg(long)]
        kappa: f64,
    },
}

fn load_config(path: &PathBuf) -> Result<SweepConfig, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        2u8
    })?;
    parse_config(&text).map_err(|e| {
        eprintln!("{e}");
        2u8
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seedless: _,
        } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return ExitCode::from(code),
            };
            if let Some(path) = out {
                cfg.out = path;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let started = Instant::now();
            let table = match run_experiment(&cfg) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            if let Err(e) = emit_csv(&table, &cfg.out) {
                eprintln!("cannot write {}: {e}", cfg.out.display());
                return ExitCode::from(1);
            }
            println!(
                "{}: {} rows -> {} ({:.1?})",
                cfg.experiment.tag(),
                table.len(),
                cfg.out.display(),
                started.elapsed()
            );
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!(
                    "OK: {} on {} sites, {} field/coupling points, {} sample times -> {}",
                    cfg.experiment.tag(),
                    cfg.length,
                    cfg.lambda_grid.len().max(cfg.field_grid.len()),
                    cfg.times().len(),
                    cfg.out.display()
                );
                ExitCode::SUCCESS
            }
            Err(code) => ExitCode::from(code),
        },
        Command::CriticalField { kappa } => match critical_field(kappa) {
            Ok(b) => {
                println!("{b:.16e}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
    }
}
