//! Batch front end: loads model files, runs the solvers and verification
//! suites, and emits one JSON report per run.

pub mod args;
pub mod commands;
pub mod files;
pub mod report;

pub use args::Cli;
pub use commands::execute;
pub use report::{RunReport, Status};

use clap::Parser;

/// Parses `argv` (including the program name) and runs the command.
pub fn run_args<I, T>(argv: I) -> Result<RunReport, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    Ok(execute(&cli))
}
