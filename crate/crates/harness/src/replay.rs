use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::commands::read_command_log;
use crate::config::ExperimentConfig;
use crate::runner::{
    drive_seed, point_dir_name, run_reports, seed_dir_name, Scripted, SeedOutput, COMMANDS_FILE, CONFIG_FILE,
    EVENTS_FILE, FINAL_STATE_FILE, METRICS_FILE,
};
use crate::HarnessError;

/// The first record that differs between the recorded and re-executed run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    /// Path relative to the run directory.
    pub file: String,
    /// Zero-based line index.
    pub index: usize,
    pub recorded: Option<String>,
    pub replayed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub run: PathBuf,
    pub identical: bool,
    /// Files compared, in comparison order.
    pub files: Vec<String>,
    pub divergence: Option<Divergence>,
}

fn first_difference(recorded: &str, replayed: &str) -> Option<(usize, Option<String>, Option<String>)> {
    let a: Vec<&str> = recorded.lines().collect();
    let b: Vec<&str> = replayed.lines().collect();
    (0..a.len().max(b.len()))
        .find(|&i| a.get(i) != b.get(i))
        .map(|i| (i, a.get(i).map(|s| s.to_string()), b.get(i).map(|s| s.to_string())))
}

fn read(path: &Path) -> Result<Option<String>, HarnessError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(HarnessError::io(path, e)),
    }
}

struct Comparer {
    root: PathBuf,
    files: Vec<String>,
    divergence: Option<Divergence>,
}

impl Comparer {
    fn compare(&mut self, rel: &str, replayed: &str) -> Result<(), HarnessError> {
        self.files.push(rel.to_string());
        if self.divergence.is_some() {
            return Ok(());
        }
        let recorded = read(&self.root.join(rel))?;
        let diff = match recorded {
            None => Some((0, None, replayed.lines().next().map(String::from))),
            Some(r) => first_difference(&r, replayed),
        };
        if let Some((index, recorded, replayed)) = diff {
            self.divergence = Some(Divergence {
                file: rel.to_string(),
                index,
                recorded,
                replayed,
            });
        }
        Ok(())
    }
}

fn load_snapshot(dir: &Path) -> Result<ExperimentConfig, HarnessError> {
    let path = dir.join(CONFIG_FILE);
    let text = read(&path)?.ok_or_else(|| HarnessError::Replay(format!("missing config snapshot {}", path.display())))?;
    ExperimentConfig::from_toml(&text, &[])
}

fn replay_point(cfg: &ExperimentConfig, dir: &Path, prefix: &str, cmp: &mut Comparer) -> Result<(), HarnessError> {
    let mut logs = Vec::new();
    for &seed in &cfg.seeds {
        let sd = dir.join(seed_dir_name(seed));
        let log_path = sd.join(COMMANDS_FILE);
        if !log_path.exists() {
            return Err(HarnessError::Replay(format!("missing command log {}", log_path.display())));
        }
        let state = sd.join(FINAL_STATE_FILE);
        if !state.exists() {
            return Err(HarnessError::Replay(format!("missing final-state snapshot {}", state.display())));
        }
        logs.push(read_command_log(&log_path)?);
    }
    let outputs: Vec<SeedOutput> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .zip(&logs)
            .map(|(&seed, log)| {
                s.spawn(move || {
                    let mut source = Scripted::from_log(log);
                    drive_seed(cfg, seed, None, &mut source, None)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("replay thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    for o in &outputs {
        let base = format!("{prefix}{}/", seed_dir_name(o.seed));
        cmp.compare(&format!("{base}{COMMANDS_FILE}"), &o.commands)?;
        cmp.compare(&format!("{base}{METRICS_FILE}"), &o.metrics)?;
        cmp.compare(&format!("{base}{EVENTS_FILE}"), &o.events)?;
        cmp.compare(&format!("{base}{FINAL_STATE_FILE}"), &o.final_state)?;
        for (name, contents) in &o.extras {
            cmp.compare(&format!("{base}{name}"), contents)?;
        }
    }
    for (name, contents) in run_reports(cfg, &outputs)? {
        cmp.compare(&format!("{prefix}{name}"), &contents)?;
    }
    Ok(())
}

/// Re-executes a run directory from its config snapshot and command logs
/// and compares every file record by record.
pub fn replay(dir: &Path) -> Result<ReplayReport, HarnessError> {
    let cfg = load_snapshot(dir)?;
    let mut cmp = Comparer {
        root: dir.to_path_buf(),
        files: Vec::new(),
        divergence: None,
    };
    if cfg.sweep.is_some() {
        for (i, point) in cfg.sweep_points()?.iter().enumerate() {
            let name = point_dir_name(i);
            let sub = dir.join(&name);
            let recorded = load_snapshot(&sub)?;
            cmp.compare(&format!("{name}/{CONFIG_FILE}"), &point.to_toml())?;
            replay_point(&recorded, &sub, &format!("{name}/"), &mut cmp)?;
        }
    } else {
        cmp.compare(CONFIG_FILE, &cfg.to_toml())?;
        replay_point(&cfg, dir, "", &mut cmp)?;
    }
    Ok(ReplayReport {
        run: dir.to_path_buf(),
        identical: cmp.divergence.is_none(),
        files: cmp.files,
        divergence: cmp.divergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_indexes_lines() {
        assert_eq!(first_difference("a\nb\n", "a\nb\n"), None);
        assert_eq!(first_difference("a\nb\n", "a\nc\n").unwrap().0, 1);
        assert_eq!(first_difference("a\n", "a\nb\n").unwrap(), (1, None, Some("b".into())));
    }
}
