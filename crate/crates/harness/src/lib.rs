//! Experiment orchestration for `commex`.
//!
//! A run directory holds the resolved `config.toml` and one `seed-N/`
//! directory per seed with `metrics.jsonl`, `events.jsonl`,
//! `command-log.jsonl` and `final-state.json`. Every record carries a
//! `schema_version`. Replaying a directory re-executes it, re-applying
//! logged commands at the iterations they were applied, and reports the
//! first record that differs.

pub mod commands;
pub mod config;
pub mod engine;
pub mod export;
pub mod oracle;
pub mod replay;
pub mod runner;
pub mod serve;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{Command, CommandRecord, ScriptedCommand};
pub use config::{ExperimentConfig, Mode};
pub use replay::{replay, Divergence, ReplayReport};
pub use runner::{run_experiment, RunOptions};

/// Version stamped on every record the harness writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("command rejected: {0}")]
    Command(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("unknown series `{name}`; available: {}", available.join(", "))]
    UnknownSeries { name: String, available: Vec<String> },
    #[error("{0}")]
    Core(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn core(e: impl std::fmt::Display) -> Self {
        HarnessError::Core(e.to_string())
    }
}
