use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub const ERROR_SCHEMA: &str = "geodual.error/1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {message}")]
    Config { key: Option<String>, message: String },

    #[error(transparent)]
    Core(#[from] geodual_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("thread pool: {0}")]
    Threads(String),
}

/// Machine-readable failure record, written as `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub schema_version: &'static str,
    pub command: &'a str,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<&'a str>,
    pub message: String,
}

impl CliError {
    pub fn key(&self) -> Option<&str> {
        match self {
            CliError::Config { key, .. } => key.as_deref(),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        use geodual_core::Error as E;
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Threads(_) => "threads",
            CliError::Core(e) => match e {
                E::NotConverged { .. } | E::UnconvergedState { .. } => "not_converged",
                E::CapTooLow { .. } => "cap_too_low",
                E::SurfaceMismatch { .. } => "surface_mismatch",
                E::Io(_) | E::Csv(_) => "io",
                _ => "invalid_input",
            },
        }
    }

    pub fn record<'a>(&'a self, command: &'a str) -> ErrorRecord<'a> {
        ErrorRecord {
            schema_version: ERROR_SCHEMA,
            command,
            kind: self.kind(),
            key: self.key(),
            message: self.to_string(),
        }
    }
}
