use std::fmt;
use std::path::{Path, PathBuf};

use commex_core::cal::{CalConfig, GaConfig};
use commex_core::chain::RecallConfig;
use commex_core::evoc::WorldConfig;
use commex_core::exchange::ExchangeConfig;
use commex_core::focus::FocusPolicy;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "COMMEX_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Evoc,
    Evoc2,
    CalBench,
    CfExperiment,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Evoc => "evoc",
            Mode::Evoc2 => "evoc2",
            Mode::CalBench => "cal-bench",
            Mode::CfExperiment => "cf-experiment",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Parent of run directories; falls back to `COMMEX_OUTPUT_ROOT`, then `runs`.
    pub root: Option<String>,
    /// Run directory name; defaults to the config file's stem.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScopConfig {
    /// Concept network used by the evoc2 mode and the oracle.
    pub concepts: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalBenchConfig {
    pub problems: Vec<String>,
    pub dimension: usize,
    pub budget: u64,
    pub recycling_budget: u64,
    /// Recycling spec file; the shipped swing task when unset.
    pub recycling: Option<String>,
    /// Evaluations between metric records.
    pub record_every: u64,
    pub agent: CalConfig,
    pub ga: GaConfig,
}

impl Default for CalBenchConfig {
    fn default() -> Self {
        CalBenchConfig {
            problems: vec!["rosenbrock".into(), "recycling".into()],
            dimension: 2,
            budget: 50_000,
            recycling_budget: 5_000,
            recycling: None,
            record_every: 1_000,
            agent: CalConfig::default(),
            ga: GaConfig::default(),
        }
    }
}

pub const CAL_PROBLEMS: [&str; 2] = ["rosenbrock", "recycling"];

/// One dotted key varied across sub-runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub key: String,
    pub values: Vec<toml::Value>,
}

/// A fully resolved experiment. `[world]` holds the lattice keys; recall
/// and focus live in their own `[rr]` and `[cf]` sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub rr: RecallConfig,
    #[serde(default)]
    pub cf: FocusPolicy,
    #[serde(default)]
    pub scop: ScopConfig,
    #[serde(default)]
    pub exchange: ExchangeConfig,
    #[serde(default)]
    pub cal: CalBenchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.into(),
        message: message.into(),
    }
}

/// Parses `key=value`, reading the value as TOML and falling back to a
/// bare string.
pub fn parse_override(text: &str) -> Result<(String, toml::Value), HarnessError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| invalid(text, "overrides take the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(invalid(text, "empty key segment"));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets a dotted key in a TOML table, creating intermediate tables.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), HarnessError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    let mut path = String::new();
    for p in parts {
        if !path.is_empty() {
            path.push('.');
        }
        path.push_str(p);
        let entry = cur.entry(p).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(&path, "is not a table, cannot set a key below it"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses a config document, applying dotted overrides first.
    pub fn from_toml(text: &str, overrides: &[(String, toml::Value)]) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid("<document>", e.to_string()))?;
        for (k, v) in overrides {
            set_dotted(&mut table, k, v.clone())?;
        }
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, HarnessError> {
        if let Some(w) = table.get("world").and_then(|w| w.as_table()) {
            for nested in ["rr", "cf"] {
                if w.contains_key(nested) {
                    return Err(invalid(
                        format!("world.{nested}"),
                        format!("set these keys in the top-level [{nested}] section"),
                    ));
                }
            }
        }
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let key = e.path().to_string();
            invalid(if key == "." { "<document>".to_string() } else { key }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, toml::Value)]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        if cfg.output.name.is_none() {
            cfg.output.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    /// The world config with the recall and focus sections folded in.
    pub fn world_config(&self) -> WorldConfig {
        let mut w = self.world.clone();
        w.rr = self.rr;
        w.cf = self.cf.clone();
        w
    }

    pub fn exchange_config(&self) -> ExchangeConfig {
        let mut e = self.exchange.clone();
        if self.scop.concepts.is_some() {
            e.concepts = self.scop.concepts.clone();
        }
        e
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let core = |e: commex_core::evoc::ConfigError| invalid(e.key(), e.to_string());
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "list at least one seed"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return Err(invalid("seeds", format!("seed {s} is listed twice")));
            }
        }
        if let Some(name) = &self.output.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(invalid("output.name", "must be a plain directory name"));
            }
        }
        match self.mode {
            Mode::Evoc | Mode::CfExperiment => self.world_config().validate().map_err(core)?,
            Mode::Evoc2 => self.exchange_config().validate().map_err(core)?,
            Mode::CalBench => {
                self.cal.agent.validate().map_err(core)?;
                self.cal.ga.validate().map_err(core)?;
                if self.cal.problems.is_empty() {
                    return Err(invalid("cal.problems", format!("list at least one of {CAL_PROBLEMS:?}")));
                }
                for p in &self.cal.problems {
                    if !CAL_PROBLEMS.contains(&p.as_str()) {
                        return Err(invalid("cal.problems", format!("unknown problem `{p}`, expected one of {CAL_PROBLEMS:?}")));
                    }
                }
                if self.cal.dimension < 2 {
                    return Err(invalid("cal.dimension", "rosenbrock needs dimension >= 2"));
                }
                if self.cal.record_every == 0 {
                    return Err(invalid("cal.record_every", "must be positive"));
                }
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(invalid("sweep.values", "list at least one value"));
            }
            if s.key.starts_with("sweep") || s.key.starts_with("output") || s.key == "mode" {
                return Err(invalid("sweep.key", format!("`{}` cannot be swept", s.key)));
            }
        }
        Ok(())
    }

    /// Parent directory for run directories.
    pub fn output_root(&self) -> PathBuf {
        self.output
            .root
            .clone()
            .or_else(|| std::env::var(OUTPUT_ROOT_ENV).ok().filter(|s| !s.is_empty()))
            .unwrap_or_else(|| DEFAULT_OUTPUT_ROOT.to_string())
            .into()
    }

    pub fn run_name(&self) -> String {
        self.output.name.clone().unwrap_or_else(|| self.mode.to_string())
    }

    /// The TOML table form, without the world's folded-in sections.
    pub fn to_table(&self) -> toml::Table {
        let mut v = toml::Value::try_from(self).expect("configs serialize to TOML");
        if let Some(w) = v.get_mut("world").and_then(|w| w.as_table_mut()) {
            w.remove("rr");
            w.remove("cf");
        }
        match v {
            toml::Value::Table(t) => t,
            _ => unreachable!("structs serialize to tables"),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("tables serialize")
    }

    /// The sub-run configs of a sweep, one per value.
    pub fn sweep_points(&self) -> Result<Vec<ExperimentConfig>, HarnessError> {
        let Some(s) = &self.sweep else {
            return Ok(vec![self.clone()]);
        };
        s.values
            .iter()
            .map(|v| {
                let mut t = self.to_table();
                t.remove("sweep");
                set_dotted(&mut t, &s.key, v.clone())?;
                Self::from_table(t).map_err(|e| match e {
                    HarnessError::Config { key, message } => invalid(format!("sweep.values ({key})"), message),
                    other => other,
                })
            })
            .collect()
    }
}
