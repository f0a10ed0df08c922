use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::RecallConfig;
use crate::focus::FocusPolicy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn key(&self) -> &str {
        match self {
            ConfigError::Invalid { key, .. } => key,
        }
    }
}

/// A cell on the lattice, `[x, y]`.
pub type Cell = [usize; 2];

/// Parameters of an EVOC world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub width: usize,
    pub height: usize,
    pub density: f64,
    /// Probability that an agent invents rather than imitates.
    pub p_create: f64,
    /// When set, this fraction of agents always invent and the rest always
    /// imitate.
    pub creator_fraction: Option<f64>,
    pub iterations: u64,
    pub learning: bool,
    /// Softmax sharpness of learned invention outside a focus shift.
    pub beta: f64,
    /// Agents foresee the fitness of an invented idea and drop it when it
    /// would be worse than the one they hold.
    pub mental_simulation: bool,
    /// Observation count after which value estimates turn into a moving
    /// average with step `1 / learn_memory`; 0 keeps the plain mean.
    pub learn_memory: u64,
    /// Agent ids visible to every agent regardless of distance or borders.
    pub leaders: Vec<usize>,
    /// Individual blocked edges between adjacent cells.
    pub borders: Vec<[Cell; 2]>,
    /// A wall on the west side of each listed column.
    pub wall_columns: Vec<usize>,
    /// A wall on the north side of each listed row.
    pub wall_rows: Vec<usize>,
    pub rr: RecallConfig,
    pub cf: FocusPolicy,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            width: 10,
            height: 10,
            density: 1.0,
            p_create: 1.0 / 6.0,
            creator_fraction: None,
            iterations: 500,
            learning: true,
            beta: 1.0,
            mental_simulation: true,
            learn_memory: 5,
            leaders: Vec::new(),
            borders: Vec::new(),
            wall_columns: Vec::new(),
            wall_rows: Vec::new(),
            rr: RecallConfig::default(),
            cf: FocusPolicy::default(),
        }
    }
}

impl WorldConfig {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn population(&self) -> usize {
        (self.density * self.cells() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.width < 1 {
            return Err(ConfigError::invalid("world.width", "must be at least 1"));
        }
        if self.height < 1 {
            return Err(ConfigError::invalid("world.height", "must be at least 1"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(ConfigError::invalid("world.density", "must lie in (0, 1]"));
        }
        if self.population() == 0 {
            return Err(ConfigError::invalid("world.density", "places no agents on this grid"));
        }
        if !(0.0..=1.0).contains(&self.p_create) {
            return Err(ConfigError::invalid("world.p_create", "must lie in [0, 1]"));
        }
        if let Some(f) = self.creator_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(ConfigError::invalid("world.creator_fraction", "must lie in [0, 1]"));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(ConfigError::invalid("world.beta", "need a finite beta >= 0"));
        }
        let n = self.population();
        if let Some(&bad) = self.leaders.iter().find(|&&id| id >= n) {
            return Err(ConfigError::invalid(
                "world.leaders",
                format!("agent id {bad} out of range (population {n})"),
            ));
        }
        for edge in &self.borders {
            for c in edge {
                if c[0] >= self.width || c[1] >= self.height {
                    return Err(ConfigError::invalid("world.borders", format!("cell {c:?} is off the grid")));
                }
            }
        }
        if let Some(c) = self.wall_columns.iter().find(|&&c| c >= self.width) {
            return Err(ConfigError::invalid("world.wall_columns", format!("column {c} is off the grid")));
        }
        if let Some(r) = self.wall_rows.iter().find(|&&r| r >= self.height) {
            return Err(ConfigError::invalid("world.wall_rows", format!("row {r} is off the grid")));
        }
        if !(0.0..=1.0).contains(&self.rr.p_extend) {
            return Err(ConfigError::invalid("rr.p_extend", "must lie in [0, 1]"));
        }
        if self.rr.top_k == 0 {
            return Err(ConfigError::invalid("rr.top_k", "must be at least 1"));
        }
        if self.rr.checkpoint_interval == 0 {
            return Err(ConfigError::invalid("rr.checkpoint_interval", "must be at least 1"));
        }
        self.cf.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        WorldConfig::default().validate().unwrap();
        assert_eq!(WorldConfig::default().population(), 100);
    }

    #[test]
    fn errors_name_the_key() {
        let cases: Vec<(WorldConfig, &str)> = vec![
            (WorldConfig { width: 0, ..Default::default() }, "world.width"),
            (WorldConfig { density: 0.0, ..Default::default() }, "world.density"),
            (WorldConfig { density: 1.5, ..Default::default() }, "world.density"),
            (WorldConfig { creator_fraction: Some(2.0), ..Default::default() }, "world.creator_fraction"),
            (WorldConfig { leaders: vec![100], ..Default::default() }, "world.leaders"),
            (WorldConfig { wall_columns: vec![10], ..Default::default() }, "world.wall_columns"),
        ];
        for (cfg, key) in cases {
            assert_eq!(cfg.validate().unwrap_err().key(), key);
        }
    }
}
