//! `waterfall`: simulate, price, calibrate and analyse a securitisation deal
//! described by one JSON config file.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use waterfall_core::autodiff::Mode;

use crate::commands::Run;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "waterfall",
    version,
    about = "Monte Carlo pricing of securitisation tranches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the toy deal config to PATH.
    Init {
        #[arg(default_value = "waterfall.json")]
        path: PathBuf,
    },
    /// Simulated pool collections and the base scenario as CSV.
    Simulate(Common),
    /// Tranche prices and price histograms.
    Price(Common),
    /// Parameter gradients, DV01 and BV01.
    Sensitivities(Common),
    /// Fit engine parameters to the target prices.
    Calibrate(Common),
    /// Expected tranche prices over time.
    Timelapse(Common),
    /// IRR, Z-spread, annuity and asset-swap spread per tranche.
    Metrics(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Random seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Path count of the command (pool paths for `simulate`, calibration
    /// paths for `calibrate`); overrides the config.
    #[arg(long)]
    paths: Option<usize>,
    /// exact or smooth; overrides the config.
    #[arg(long)]
    mode: Option<Mode>,
    /// Output directory.
    #[arg(long, env = "WATERFALL_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

fn prepare(
    common: &Common,
    paths_field: fn(&mut RunConfig) -> &mut usize,
) -> Result<Run, CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.pricing.seed = seed;
    }
    if let Some(mode) = common.mode {
        config.pricing.mode = mode;
    }
    if let Some(n) = common.paths {
        if n == 0 {
            return Err(CliError::Usage("--paths must be at least 1".into()));
        }
        *paths_field(&mut config) = n;
    }
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    std::fs::create_dir_all(&common.out).map_err(|source| CliError::Io {
        path: common.out.display().to_string(),
        source,
    })?;
    Ok(Run {
        config,
        out_dir: common.out.clone(),
    })
}

fn pricing_paths(c: &mut RunConfig) -> &mut usize {
    &mut c.pricing.paths
}

fn dispatch(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Init { path } => {
            let mut text = serde_json::to_string_pretty(&RunConfig::toy())?;
            text.push('\n');
            std::fs::write(&path, text).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(vec![path])
        }
        Command::Simulate(c) => {
            commands::simulate(&prepare(&c, |c| &mut c.pricing.simulate_paths)?)
        }
        Command::Price(c) => commands::price(&prepare(&c, pricing_paths)?),
        Command::Sensitivities(c) => commands::sensitivities(&prepare(&c, pricing_paths)?),
        Command::Calibrate(c) => {
            commands::calibrate_cmd(&prepare(&c, |c| &mut c.calibration.paths)?)
        }
        Command::Timelapse(c) => commands::timelapse(&prepare(&c, pricing_paths)?),
        Command::Metrics(c) => commands::metrics(&prepare(&c, pricing_paths)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
