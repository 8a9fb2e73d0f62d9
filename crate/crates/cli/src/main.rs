//! `noum` — batch experiment runner for the NOUM precoder-optimization
//! toolkit.
//!
//! Usage: `noum run <config.toml> [--seed N] [--out DIR] [--paper-scale]
//! [--strategies a,b,c] [--jobs N] [--strict]`.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when `--strict` is
//! set and an instance is QoS-infeasible.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use experiments::{run, RunContext, RunError};
use output::fnv1a64;

#[derive(Parser)]
#[command(name = "noum", version, about = "NOUM precoder-optimization experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the experiment configuration.
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: config `out` key, else `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Paper-scale sampling (1000 CSIT samples, 100 realizations).
        #[arg(long)]
        paper_scale: bool,
        /// Comma-separated strategy list overriding the config.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Abort with exit code 3 on any QoS-infeasible instance.
        #[arg(long)]
        strict: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out, paper_scale, strategies, jobs, strict } => {
            let text = match std::fs::read(&config) {
                Ok(bytes) => bytes,
                Err(e) => {
                    eprintln!("config error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let mut parsed = match ExperimentConfig::parse(&String::from_utf8_lossy(&text)) {
                Ok(parsed) => parsed,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(names) = strategies {
                parsed.strategies = Some(names);
            }
            let kinds = match parsed.strategy_kinds() {
                Ok(kinds) => kinds,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(n) = jobs {
                if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                    eprintln!("warning: worker pool already initialized");
                }
            }
            let out_dir = out
                .or_else(|| parsed.out.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results"));
            let ctx = RunContext {
                config_hash: fnv1a64(&text),
                seed: seed.unwrap_or(parsed.seed),
                strategies: kinds,
                paper_scale,
                strict,
                config: parsed,
            };
            match run(&ctx, &out_dir) {
                Ok(()) => {
                    println!(
                        "wrote {}/{}.csv",
                        out_dir.display(),
                        ctx.config.experiment.name()
                    );
                    ExitCode::SUCCESS
                }
                Err(RunError::Infeasible(msg)) => {
                    eprintln!("infeasible instance under --strict: {msg}");
                    ExitCode::from(3)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
