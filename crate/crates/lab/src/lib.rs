//! Command-line front-end for `lilsde-core`: TOML experiment files, a seeded
//! worker pool and deterministic CSV/JSON outputs with a reproducibility
//! manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Config;
pub use error::{LabError, Result};
use output::OutputDir;

#[derive(Debug, Parser)]
#[command(
    name = "lilsde",
    version,
    about = "Rescaled anticipating SDEs, rate functions and LIL statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the anticipating equation, or `ξ^u` when `simulate.u` is set.
    Simulate(RunArgs),
    /// Integrate the skeleton of a control.
    Skeleton(RunArgs),
    /// Rate function of a target path.
    Rate(RunArgs),
    /// Sup-distance of a path to the limit set.
    Dist(RunArgs),
    /// Geometric-scale LIL statistics over seeds.
    Lil(RunArgs),
    /// Check convergence of the rescaled coefficients.
    CheckH(RunArgs),
    /// Check the tail condition of the rescaled initial point.
    CheckC(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Skeleton(_) => "skeleton",
            Command::Rate(_) => "rate",
            Command::Dist(_) => "dist",
            Command::Lil(_) => "lil",
            Command::CheckH(_) => "check-h",
            Command::CheckC(_) => "check-c",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Skeleton(a)
            | Command::Rate(a)
            | Command::Dist(a)
            | Command::Lil(a)
            | Command::CheckH(a)
            | Command::CheckC(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Use seeds `0 … n-1`.
    #[arg(long, value_name = "N", conflicts_with = "seed_list")]
    pub seeds: Option<u64>,
    /// Comma-separated explicit seeds.
    #[arg(long, value_name = "S1,S2,…", value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,
    /// Override a config key, e.g. `--set grid.windows=12`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    /// The `--set` overrides followed by the seed flags, in precedence order.
    pub fn overrides(&self) -> Vec<String> {
        let mut all = self.set.clone();
        let seeds: Option<Vec<u64>> = match (&self.seeds, &self.seed_list) {
            (Some(n), _) => Some((0..*n).collect()),
            (None, Some(list)) => Some(list.clone()),
            (None, None) => None,
        };
        if let Some(s) = seeds {
            let list: Vec<String> = s.iter().map(u64::to_string).collect();
            all.push(format!("seeds=[{}]", list.join(",")));
        }
        all
    }
}

pub fn run(command: &Command) -> Result<()> {
    let args = command.args();
    let overrides = args.overrides();
    let cfg = Config::load(&args.config, &overrides)?;
    let mut out = OutputDir::new(&args.out);
    let outcome = match command {
        Command::Simulate(_) => commands::simulate(&cfg, &mut out),
        Command::Skeleton(_) => commands::skeleton(&cfg, &mut out),
        Command::Rate(_) => commands::rate(&cfg, &mut out),
        Command::Dist(_) => commands::dist(&cfg, &mut out),
        Command::Lil(_) => commands::lil(&cfg, &mut out),
        Command::CheckH(_) => commands::check_h(&cfg, &mut out),
        Command::CheckC(_) => commands::check_c(&cfg, &mut out),
    };
    // outputs of a non-converged optimizer are still worth keeping
    match outcome {
        Ok(()) | Err(LabError::NotConverged(_)) => {
            out.finish(command.name(), &cfg.to_toml()?, &cfg.seeds, &overrides)?;
            outcome
        }
        Err(e) => Err(e),
    }
}
