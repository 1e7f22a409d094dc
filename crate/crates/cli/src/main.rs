//! `critmetric`: experiments on critical metrics of toric manifolds.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 non-convergence or
//! inconclusive verdict, 3 invalid input.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{Finish, InvalidInput};
use config::RunConfig;
use output::Outputs;

#[derive(Parser)]
#[command(name = "critmetric", version, about = "Critical metrics relative to a torus on toric manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the quadrature resolution.
    #[arg(long, global = true)]
    resolution: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve for a critical metric.
    Balance,
    /// Chow norm derivatives along a special one-parameter subgroup.
    Chow,
    /// Torus orbit-closedness and stability probes.
    Git,
    /// Bergman and twisted densities.
    Density,
    /// Scalar curvature, extremal field and expansion checks.
    Extremal,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Balance => "balance",
            Command::Chow => "chow",
            Command::Git => "git",
            Command::Density => "density",
            Command::Extremal => "extremal",
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let Some(path) = &cli.config else {
        return Err(InvalidInput("--config is required".into()).into());
    };
    let mut config = RunConfig::load(path).map_err(|e| InvalidInput(format!("{e:#}")))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(r) = cli.resolution {
        config.quadrature.resolution = r;
    }
    config.validate().map_err(|e| InvalidInput(format!("{e:#}")))?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<i32> {
    let config = load(cli)?;
    let mut out = Outputs::create(&cli.out)?;
    let finish = match cli.command {
        Command::Balance => commands::balance(&config, &mut out)?,
        Command::Chow => commands::chow(&config, &mut out)?,
        Command::Git => commands::git(&config, &mut out)?,
        Command::Density => commands::density(&config, &mut out)?,
        Command::Extremal => commands::extremal(&config, &mut out)?,
    };
    let code = match finish {
        Finish::Done => 0,
        Finish::Incomplete => 2,
    };
    out.finish(cli.command.name(), &config.canonical()?, config.seed, code)?;
    Ok(code)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<InvalidInput>().is_some() {
        return 3;
    }
    match err.downcast_ref::<critmetric::Error>() {
        Some(
            critmetric::Error::InvalidArgument(_)
            | critmetric::Error::InvalidIndex(_)
            | critmetric::Error::Serialization(_)
            | critmetric::Error::Precondition(_),
        ) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
