//! Experiment runner for the `randode` schemes: table reproduction, confidence
//! band figures, tail curves, diagnostics and reference-cache management.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

pub use args::{Cli, Command};
pub use config::{ConfigFile, ExperimentConfig};
pub use manifest::{CellRecord, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// A check or table cell failed; outputs were still written.
    #[error("{0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] randode::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for usage errors (including invalid parameters), 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(randode::Error::Domain(_)) => 2,
            _ => 1,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Table(a) => commands::table(&a),
        Command::Band(a) => commands::band(&a),
        Command::Tail(a) => commands::tail(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::BuildRef(a) => commands::build_ref(&a),
    }
}
