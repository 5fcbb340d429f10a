//! Config-driven experiment runner behind the `qdopt` binary.

mod commands;
mod config;
mod report;

pub use config::{
    parse_pair, ChannelConfig, Command, ExperimentConfig, OutputConfig, PerturbationConfig,
    SigmaGrid, Tolerances,
};
pub use report::{Check, CsvTable, RunOutput, RunReport};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::parallel::{with_env_threads, with_threads};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit code for an error raised before or during a run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Json(_) | Error::Io(_) | Error::DimensionMismatch { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_NUMERICAL,
    }
}

/// Validates, resolves defaults and runs the experiment without writing files.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let resolved = config.resolved();
    let start = Instant::now();
    let body = || commands::dispatch(&resolved);
    let outcome = match resolved.threads {
        Some(n) => with_threads(n, body),
        None => with_env_threads(body),
    }?;
    Ok(RunOutput::assemble(resolved, outcome, start.elapsed().as_secs_f64()))
}

/// [`execute`] followed by writing the report and CSV to the configured paths.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let out = execute(config)?;
    out.write_files()?;
    Ok(out)
}
