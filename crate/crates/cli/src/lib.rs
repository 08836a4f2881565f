//! Config ingestion, command orchestration and artifact output for `geodual`.

pub mod commands;
pub mod config;
pub mod error;
pub mod json;

pub use commands::{cmd_run, cmd_solve, cmd_verify, verify, Property, RunSummary, SolveSummary, VerifyReport};
pub use config::{load_config, parse_config, RunConfig};
pub use error::CliError;
