//! Library behind the `dpc` binary: scenario files, subcommands and plots.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] dpc_core::Error),
    #[error("solver hit the iteration limit: {0}")]
    MaxIter(String),
}

impl CliError {
    /// 2 for bad input, 3 for an infeasible schedule, 4 for solver failure.
    pub fn exit_code(&self) -> i32 {
        use dpc_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::MaxIter(_) => 4,
            CliError::Core(e) => match e {
                E::Infeasible { .. } => 3,
                E::Solver(_) | E::Qp(_) => 4,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dpc", version, about = "Dynamic power constraints for battery scheduling")]
pub struct Cli {
    /// Scenario TOML file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for synthetic service traces.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// spc, dpc, dpc-nv or all; overrides `scheduler.mode`.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit power envelopes and write their coefficients and samples.
    Envelope,
    /// Solve one scheduling problem.
    Schedule(SocArg),
    /// Run the closed loop over the service trace.
    Simulate(SocArg),
    /// Run the closed loop for every initial SOC in `[sweep]`.
    Sweep,
    /// Write the forecast intervals the scenario resolves to.
    Forecast(ForecastArgs),
}

#[derive(Debug, Args)]
pub struct SocArg {
    /// Initial SOC; defaults to `scheduler.soc0`.
    #[arg(long)]
    pub soc0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// 1 Hz `t_s,power_kw` trace to estimate from instead of `[forecast]`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let loaded = config::Loaded::from_path(path)?;
    let ctx = commands::Context {
        out: loaded.out_dir(cli.out.as_deref()),
        seed: cli.seed,
        mode: cli.mode.clone(),
        loaded,
    };
    match &cli.command {
        Command::Envelope => commands::envelope(&ctx),
        Command::Schedule(a) => commands::schedule(&ctx, a.soc0),
        Command::Simulate(a) => commands::simulate(&ctx, a.soc0),
        Command::Sweep => commands::sweep(&ctx),
        Command::Forecast(a) => commands::forecast(&ctx, a.trace.as_deref()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let inf = CliError::Core(dpc_core::Error::Infeasible { diagnosis: vec![] });
        assert_eq!(inf.exit_code(), 3);
        assert_eq!(CliError::Core(dpc_core::Error::Solver("x".into())).exit_code(), 4);
        assert_eq!(CliError::MaxIter("x".into()).exit_code(), 4);
        assert_eq!(CliError::Core(dpc_core::Error::InvalidParam("x".into())).exit_code(), 2);
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["dpc", "sweep", "--config", "a.toml", "--mode", "all", "--seed", "3"]).unwrap();
        assert_eq!(cli.mode.as_deref(), Some("all"));
        assert_eq!(cli.seed, Some(3));
        assert!(matches!(cli.command, Command::Sweep));
    }
}
