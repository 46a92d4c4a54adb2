//! Experiment drivers for the kacld toolkit: configuration, the five
//! subcommands, and reproducible CSV/JSON emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod ldp;
pub mod output;
pub mod sanov;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use kacld::kac::Scheme;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SchemeArg {
    Exact,
    Null,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Exact => Scheme::Exact,
            SchemeArg::Null => Scheme::Null,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate the hard-sphere Kac walk and write event logs.
    Simulate,
    /// Microcanonical Sanov estimates for an empirical-measure event.
    SanovScan,
    /// Tube probabilities for (π^N, Q^N) by martingale reweighting.
    KacLdp,
    /// Lu–Wennberg approximants, rate convergence and canonical cost.
    Luw,
    /// Binned rate functionals of simulated pairs.
    Rate,
}

#[derive(Debug, Parser)]
#[command(name = "kacld", version, about = "Kac walk large-deviation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the out key.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the scheme key.
    #[arg(long, global = true, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Parse the config, build the worker pool and dispatch.
pub fn run(cli: &Cli) -> CliResult<()> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let ov = Overrides { seed: cli.seed, out: cli.out.clone(), scheme: cli.scheme.map(Scheme::from) };
    let cfg = ExperimentConfig::from_file(path, &ov)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_command(cli.command, &cfg))
}

pub fn run_command(cmd: Command, cfg: &ExperimentConfig) -> CliResult<()> {
    match cmd {
        Command::Simulate => commands::cmd_simulate(cfg),
        Command::SanovScan => commands::cmd_sanov_scan(cfg),
        Command::KacLdp => commands::cmd_kac_ldp(cfg),
        Command::Luw => commands::cmd_luw(cfg),
        Command::Rate => commands::cmd_rate(cfg),
    }
}
