//! Command-line front end: portfolio CSV in, loss-distribution reports out.
//!
//! Exit codes are `0` on success, `1` for pipeline or model errors and `2`
//! for usage or input errors.

pub mod commands;
pub mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunArgs, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unreadable/garbled input.
    Usage(String),
    /// The model or pipeline rejected the run.
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Model(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Model(m) => f.write_str(m),
        }
    }
}

impl From<indemnity::Error> for CliError {
    fn from(e: indemnity::Error) -> Self {
        CliError::Model(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "indemnity", version, about = "Aggregate indemnity-payment distributions and VaR contributions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check declared expected losses and sector ratios.
    Validate(RunArgs),
    /// Quantiles, moments and per-obligor VaR contributions.
    Analyze(RunArgs),
    /// Monte Carlo run compared against the analytic distribution.
    Simulate(RunArgs),
    /// Dump the full loss distribution.
    Dist(RunArgs),
}

type Handler = fn(&RunConfig) -> Result<u8, CliError>;

pub fn run(cli: Cli) -> ExitCode {
    let (args, command): (&RunArgs, Handler) = match &cli.command {
        Command::Validate(a) => (a, commands::cmd_validate),
        Command::Analyze(a) => (a, commands::cmd_analyze),
        Command::Simulate(a) => (a, commands::cmd_simulate),
        Command::Dist(a) => (a, commands::cmd_dist),
    };
    let outcome = RunConfig::from_args(args).and_then(|cfg| command(&cfg));
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
