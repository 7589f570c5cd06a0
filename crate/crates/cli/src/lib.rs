//! Config-driven experiment runner for `slack-clearing`.
//!
//! Every subcommand reads one JSON config, runs, and writes a report bundle
//! (CSV tables, `results.json`, `manifest.json`) into an output directory.

pub mod commands;
pub mod config;
pub mod generate;
pub mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{load_config, parse_config, ConfigError, ScenarioConfig};
pub use report::{Manifest, Report};

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const PROPERTY_VIOLATION: i32 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Clear,
    Dominance,
    Coalition,
    Boundary,
    Policy,
    Compare,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Clear,
        Command::Dominance,
        Command::Coalition,
        Command::Boundary,
        Command::Policy,
        Command::Compare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Clear => "clear",
            Self::Dominance => "dominance",
            Self::Coalition => "coalition",
            Self::Boundary => "boundary",
            Self::Policy => "policy",
            Self::Compare => "compare",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at {0}")]
    Config(#[from] ConfigError),
    /// Rejected by the library, e.g. a search space above the cap.
    #[error("{0}")]
    Input(#[from] slack_clearing::Error),
    #[error("no output directory: pass --out or set output_dir")]
    NoOutputDir,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("serializing results: {0}")]
    Json(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Input(_) | Self::NoOutputDir => exit::INVALID_INPUT,
            Self::Io { .. } | Self::Csv { .. } | Self::Json(_) => exit::FAILURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub report: Report,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.findings.is_empty() {
            exit::OK
        } else {
            exit::PROPERTY_VIOLATION
        }
    }
}

/// Validate and run without writing anything.
pub fn execute(config: &ScenarioConfig, command: Command) -> Result<Report, CliError> {
    config.validate(command)?;
    match command {
        Command::Clear => commands::clear(config),
        Command::Dominance => commands::dominance(config),
        Command::Coalition => commands::coalition(config),
        Command::Boundary => commands::boundary(config),
        Command::Policy => commands::policy(config),
        Command::Compare => commands::compare(config),
    }
}

/// Apply overrides, run, and write the bundle. `seed` replaces the config
/// seed; `out` replaces its output directory.
pub fn run(
    mut config: ScenarioConfig,
    command: Command,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<RunOutcome, CliError> {
    if let Some(s) = seed {
        config.seed = Some(s);
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or(CliError::NoOutputDir)?;
    let report = execute(&config, command)?;
    let manifest = report::write_bundle(&dir, command, &config, &report)?;
    Ok(RunOutcome { manifest, report })
}
