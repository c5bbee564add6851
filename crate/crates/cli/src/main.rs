use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    indemnity_cli::run(indemnity_cli::Cli::parse())
}
