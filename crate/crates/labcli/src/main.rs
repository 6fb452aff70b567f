mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::errors::{exit_code, invalid};

#[derive(Parser)]
#[command(name = "roughhedge", version, about = "Hedging-cost experiments under fast mean-reverting volatility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate market paths and store them with a manifest
    Simulate(Common),
    /// Tabulate the asymptotic cost surfaces
    Surfaces(Common),
    /// Run the hedging schemes over the moneyness grid
    Hedge(Common),
    /// Choose the hedging parameter for the HW and BS schemes
    Calibrate(Common),
    /// Asymptotic cost mean and variance, next to any Monte Carlo results
    Predict(Common),
    /// Print the configuration JSON schema
    Schema,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, env = "ROUGHHEDGE_THREADS")]
    threads: Option<usize>,
    /// Overrides the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        let mut cfg = ExperimentConfig::parse(&text).map_err(invalid)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Schema => {
            print!("{}", config::SCHEMA);
            return Ok(());
        }
        Command::Simulate(c)
        | Command::Surfaces(c)
        | Command::Hedge(c)
        | Command::Calibrate(c)
        | Command::Predict(c) => c,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(invalid(anyhow::anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting the thread pool")?;
    }
    let cfg = common.load()?;
    let ctx = commands::Context::open(cfg)?;
    match cli.command {
        Command::Simulate(_) => commands::simulate(&ctx),
        Command::Surfaces(_) => commands::surfaces(&ctx),
        Command::Hedge(_) => commands::hedge(&ctx),
        Command::Calibrate(_) => commands::calibrate(&ctx),
        Command::Predict(_) => commands::predict(&ctx),
        Command::Schema => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
