//! Plot data: one CSV per series with the header `iteration,value`.
//!
//! Series are the numeric fields of the metric records. Modes whose records
//! carry a `cf_mode` or `problem` tag get one file per tag value, named
//! `<series>-<tag>.csv`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::commands::read_jsonl;
use crate::runner::METRICS_FILE;
use crate::HarnessError;

pub const CSV_HEADER: [&str; 2] = ["iteration", "value"];
const TAGS: [&str; 2] = ["cf_mode", "problem"];
const NOT_SERIES: [&str; 2] = ["iteration", "schema_version"];

/// Directories holding a metrics stream, relative to the run directory.
fn streams(run: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = run.join(&rel);
        if dir.join(METRICS_FILE).is_file() {
            out.push(rel.clone());
        }
        for entry in std::fs::read_dir(&dir).map_err(|e| HarnessError::io(&dir, e))? {
            let entry = entry.map_err(|e| HarnessError::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.path().is_dir() && (name.starts_with("seed-") || name.starts_with("point-")) {
                stack.push(rel.join(name));
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(HarnessError::Replay(format!("{} holds no {METRICS_FILE}", run.display())));
    }
    Ok(out)
}

fn series_of(records: &[Value]) -> Vec<String> {
    let mut names: Vec<String> = records
        .iter()
        .filter_map(Value::as_object)
        .flat_map(|m| m.iter().filter(|(_, v)| v.is_number()).map(|(k, _)| k.clone()))
        .filter(|k| !NOT_SERIES.contains(&k.as_str()))
        .collect();
    names.sort();
    names.dedup();
    names
}

/// Numeric series available in a run directory.
pub fn available_series(run: &Path) -> Result<Vec<String>, HarnessError> {
    let mut all = Vec::new();
    for rel in streams(run)? {
        let records: Vec<Value> = read_jsonl(&run.join(rel).join(METRICS_FILE))?;
        all.extend(series_of(&records));
    }
    all.sort();
    all.dedup();
    Ok(all)
}

/// Writes the requested series for every seed under `out`, mirroring the
/// run's directory layout, and returns the files written.
pub fn export(run: &Path, series: &[String], out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let available = available_series(run)?;
    for s in series {
        if !available.contains(s) {
            return Err(HarnessError::UnknownSeries {
                name: s.clone(),
                available,
            });
        }
    }
    let mut written = Vec::new();
    for rel in streams(run)? {
        let records: Vec<Value> = read_jsonl(&run.join(&rel).join(METRICS_FILE))?;
        let dir = out.join(&rel);
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for s in series {
            let mut groups: BTreeMap<Option<String>, Vec<[String; 2]>> = BTreeMap::new();
            for r in &records {
                let tag = TAGS.iter().find_map(|t| r.get(*t).and_then(Value::as_str)).map(String::from);
                let rows = groups.entry(tag).or_default();
                if let (Some(it), Some(v)) = (r.get("iteration"), r.get(s).filter(|v| v.is_number())) {
                    rows.push([it.to_string(), v.to_string()]);
                }
            }
            for (tag, rows) in groups {
                let file = dir.join(match &tag {
                    Some(t) => format!("{s}-{t}.csv"),
                    None => format!("{s}.csv"),
                });
                let mut w = csv::Writer::from_path(&file).map_err(|e| csv_err(&file, e))?;
                w.write_record(CSV_HEADER).map_err(|e| csv_err(&file, e))?;
                for row in rows {
                    w.write_record(&row).map_err(|e| csv_err(&file, e))?;
                }
                w.flush().map_err(|e| HarnessError::io(&file, e))?;
                written.push(file);
            }
        }
    }
    Ok(written)
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::io(path, std::io::Error::other(e))
}
