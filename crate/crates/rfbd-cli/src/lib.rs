//! Command-line front end: configuration files, binary artifact formats,
//! CSV reports, SVG plots and the experiment subcommands.

pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod manifest;
pub mod report;
pub mod sidecar;
pub mod svg;

use std::fmt;
use std::path::Path;

/// Errors mapped onto process exit codes: configuration/usage problems exit
/// with 1, runtime failures with 3 (a flagged defense exits 2 but is not an
/// error).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("bin")
    ));
    std::fs::write(&tmp, bytes)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}
