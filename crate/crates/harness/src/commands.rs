use std::collections::BTreeMap;
use std::path::Path;

use commex_core::exchange::ObjectId;
use serde::{Deserialize, Serialize};

use crate::{HarnessError, SCHEMA_VERSION};

/// An external input. Commands take effect only between iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Pause,
    Resume,
    Stop,
    DefineContext {
        concept: String,
        context: String,
        /// State name to property weights.
        weights: BTreeMap<String, BTreeMap<String, f64>>,
    },
    RateObject {
        object: ObjectId,
        rating: f64,
    },
}

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Stop => "stop",
            Command::DefineContext { .. } => "define_context",
            Command::RateObject { .. } => "rate_object",
        }
    }
}

/// One line of `command-log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandRecord {
    pub schema_version: u32,
    /// Arrival order, from 0.
    pub index: u64,
    /// Iterations completed when the command took effect.
    pub applied_at_iteration: u64,
    pub command: Command,
}

impl CommandRecord {
    pub fn new(index: u64, applied_at_iteration: u64, command: Command) -> Self {
        CommandRecord {
            schema_version: SCHEMA_VERSION,
            index,
            applied_at_iteration,
            command,
        }
    }
}

/// A command scheduled for a boundary in a script file; without `seed` it
/// applies to every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    #[serde(default)]
    pub seed: Option<u64>,
    pub at: u64,
    pub command: Command,
}

/// Reads a line-delimited file, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_command_log(path: &Path) -> Result<Vec<CommandRecord>, HarnessError> {
    let log: Vec<CommandRecord> = read_jsonl(path)?;
    for (i, r) in log.iter().enumerate() {
        if r.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("schema_version {} is not supported", r.schema_version),
            });
        }
        if r.index != i as u64 || (i > 0 && r.applied_at_iteration < log[i - 1].applied_at_iteration) {
            return Err(HarnessError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: "command log is out of order".into(),
            });
        }
    }
    Ok(log)
}
