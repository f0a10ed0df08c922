use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use commex_core::focus::{censored_median, cf_report, CfMode, CfReport, ModeReport, SeedRecovery};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{Command, CommandRecord, ScriptedCommand};
use crate::config::{ExperimentConfig, Mode};
use crate::engine::{self, ExtraFile};
use crate::{HarnessError, SCHEMA_VERSION};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const COMMANDS_FILE: &str = "command-log.jsonl";
pub const FINAL_STATE_FILE: &str = "final-state.json";

/// Adds `schema_version` to a record object.
pub fn stamp(v: &mut Value) {
    if let Value::Object(m) = v {
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
}

fn line(mut v: Value) -> String {
    stamp(&mut v);
    let mut s = v.to_string();
    s.push('\n');
    s
}

pub fn seed_dir_name(seed: u64) -> String {
    format!("seed-{seed}")
}

/// Reply channel for a live command.
pub type Reply = tokio::sync::oneshot::Sender<Result<CommandRecord, String>>;

pub enum Polled {
    Command(Command, Option<Reply>),
    /// Nothing more at this boundary.
    Idle,
}

/// Supplies commands at iteration boundaries. A paused run whose source
/// goes idle ends at that boundary.
pub trait CommandSource: Send {
    fn poll(&mut self, at: u64, paused: bool) -> Polled;
}

/// Commands from a script file, applied at their scheduled boundaries.
pub struct Scripted {
    queue: std::collections::VecDeque<Command>,
    at: std::collections::VecDeque<u64>,
}

impl Scripted {
    pub fn new(seed: u64, script: &[ScriptedCommand]) -> Self {
        let mut mine: Vec<&ScriptedCommand> = script.iter().filter(|c| c.seed.is_none_or(|s| s == seed)).collect();
        mine.sort_by_key(|c| c.at);
        Scripted {
            queue: mine.iter().map(|c| c.command.clone()).collect(),
            at: mine.iter().map(|c| c.at).collect(),
        }
    }

    pub fn from_log(log: &[CommandRecord]) -> Self {
        Scripted {
            queue: log.iter().map(|r| r.command.clone()).collect(),
            at: log.iter().map(|r| r.applied_at_iteration).collect(),
        }
    }
}

impl CommandSource for Scripted {
    fn poll(&mut self, at: u64, _paused: bool) -> Polled {
        match self.at.front() {
            Some(&t) if t <= at => {
                self.at.pop_front();
                Polled::Command(self.queue.pop_front().expect("queues match"), None)
            }
            _ => Polled::Idle,
        }
    }
}

/// What an observer sees of a running seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Paused,
    Stopped,
    Finished,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiveState {
    pub id: String,
    pub mode: Mode,
    pub seed: u64,
    pub status: Status,
    pub iteration: u64,
    #[serde(skip)]
    pub metrics: Vec<Value>,
    #[serde(skip)]
    pub objects: Option<Value>,
    pub commands: Vec<CommandRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LiveState {
    pub fn new(mode: Mode, seed: u64) -> Self {
        LiveState {
            id: seed_dir_name(seed),
            mode,
            seed,
            status: Status::Running,
            iteration: 0,
            metrics: Vec::new(),
            objects: None,
            commands: Vec::new(),
            error: None,
        }
    }
}

pub type Observer = Arc<RwLock<LiveState>>;

/// Writes a seed's streams, to disk or to memory.
struct Sink {
    files: Option<(PathBuf, [BufWriter<File>; 3])>,
    mem: [String; 3],
}

impl Sink {
    fn disk(dir: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let open = |name: &str| {
            let p = dir.join(name);
            File::create(&p).map(BufWriter::new).map_err(|e| HarnessError::io(&p, e))
        };
        Ok(Sink {
            files: Some((dir.to_path_buf(), [open(METRICS_FILE)?, open(EVENTS_FILE)?, open(COMMANDS_FILE)?])),
            mem: Default::default(),
        })
    }

    fn memory() -> Self {
        Sink {
            files: None,
            mem: Default::default(),
        }
    }

    fn write(&mut self, stream: usize, text: &str) -> Result<(), HarnessError> {
        match &mut self.files {
            Some((dir, w)) => {
                let name = [METRICS_FILE, EVENTS_FILE, COMMANDS_FILE][stream];
                w[stream]
                    .write_all(text.as_bytes())
                    .and_then(|_| w[stream].flush())
                    .map_err(|e| HarnessError::io(&dir.join(name), e))
            }
            None => {
                self.mem[stream].push_str(text);
                Ok(())
            }
        }
    }

    fn file(&mut self, name: &str, contents: &str) -> Result<(), HarnessError> {
        if let Some((dir, _)) = &self.files {
            let p = dir.join(name);
            std::fs::write(&p, contents).map_err(|e| HarnessError::io(&p, e))?;
        }
        Ok(())
    }
}

/// Everything a seed produced, as written.
#[derive(Debug, Clone, Default)]
pub struct SeedOutput {
    pub seed: u64,
    pub metrics: String,
    pub events: String,
    pub commands: String,
    pub final_state: String,
    pub extras: Vec<(String, String)>,
    pub summary: Option<Value>,
    pub status: String,
}

fn set_status(obs: &Option<Observer>, status: Status) {
    if let Some(o) = obs {
        o.write().expect("observer lock").status = status;
    }
}

/// Drives one seed to completion, applying commands only between
/// iterations: each is validated, logged, then applied.
pub fn drive_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: Option<&Path>,
    source: &mut dyn CommandSource,
    observer: Option<Observer>,
) -> Result<SeedOutput, HarnessError> {
    let result = drive_inner(cfg, seed, dir, source, &observer);
    if let (Err(e), Some(o)) = (&result, &observer) {
        let mut s = o.write().expect("observer lock");
        s.status = Status::Failed;
        s.error = Some(e.to_string());
    }
    result
}

fn drive_inner(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: Option<&Path>,
    source: &mut dyn CommandSource,
    observer: &Option<Observer>,
) -> Result<SeedOutput, HarnessError> {
    let mut engine = engine::build(cfg, seed)?;
    let mut sink = match dir {
        Some(d) => Sink::disk(d)?,
        None => Sink::memory(),
    };
    let mut paused = false;
    let mut stopped = false;
    let mut index = 0u64;

    let observe = |engine: &dyn engine::Engine, metric: Option<&Value>, record: Option<&CommandRecord>, paused: bool| {
        if let Some(o) = observer {
            let objects = engine.objects();
            let mut s = o.write().expect("observer lock");
            s.iteration = engine.iteration();
            if let Some(m) = metric {
                s.metrics.push(m.clone());
            }
            if let Some(r) = record {
                s.commands.push(r.clone());
            }
            s.objects = objects;
            s.status = if paused { Status::Paused } else { Status::Running };
        }
    };
    observe(engine.as_ref(), None, None, false);

    let flush_events = |engine: &mut dyn engine::Engine, sink: &mut Sink| -> Result<(), HarnessError> {
        for e in engine.drain_events() {
            sink.write(1, &line(e))?;
        }
        Ok(())
    };

    'run: loop {
        let at = engine.iteration();
        loop {
            match source.poll(at, paused) {
                Polled::Command(cmd, reply) => {
                    if let Err(e) = engine.check(&cmd) {
                        tracing::warn!(seed, iteration = at, kind = cmd.kind(), error = %e, "command rejected");
                        match reply {
                            Some(r) => {
                                let _ = r.send(Err(e.to_string()));
                                continue;
                            }
                            None => return Err(e),
                        }
                    }
                    let record = CommandRecord::new(index, at, cmd.clone());
                    index += 1;
                    sink.write(2, &line(engine::to_value(&record)))?;
                    match &cmd {
                        Command::Pause => paused = true,
                        Command::Resume => paused = false,
                        Command::Stop => stopped = true,
                        other => engine.apply(other)?,
                    }
                    tracing::info!(seed, iteration = at, kind = cmd.kind(), index = record.index, "command applied");
                    flush_events(engine.as_mut(), &mut sink)?;
                    observe(engine.as_ref(), None, Some(&record), paused);
                    if let Some(r) = reply {
                        let _ = r.send(Ok(record));
                    }
                    if stopped {
                        break 'run;
                    }
                }
                Polled::Idle => {
                    if paused {
                        break 'run;
                    }
                    break;
                }
            }
        }
        if engine.finished() {
            break;
        }
        let m = engine.step()?;
        let text = line(m.clone());
        sink.write(0, &text)?;
        flush_events(engine.as_mut(), &mut sink)?;
        observe(engine.as_ref(), Some(&m), None, paused);
    }

    let status = if stopped {
        "stopped"
    } else if engine.finished() {
        "completed"
    } else {
        "paused"
    };
    let state = engine.finish()?;
    flush_events(engine.as_mut(), &mut sink)?;
    let final_state = {
        let mut v = json!({
            "mode": cfg.mode,
            "seed": seed,
            "iterations_completed": engine.iteration(),
            "status": status,
            "state": state,
        });
        stamp(&mut v);
        let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
        s.push('\n');
        s
    };
    sink.file(FINAL_STATE_FILE, &final_state)?;
    let extras: Vec<(String, String)> = engine
        .extra_files()
        .into_iter()
        .map(|ExtraFile { name, contents }| (name, contents))
        .collect();
    for (name, contents) in &extras {
        sink.file(name, contents)?;
    }
    if let Some(o) = observer {
        let objects = engine.objects();
        let mut s = o.write().expect("observer lock");
        s.objects = objects;
        s.iteration = engine.iteration();
    }
    set_status(observer, if stopped { Status::Stopped } else { Status::Finished });
    let [metrics, events, commands] = sink.mem;
    Ok(SeedOutput {
        seed,
        metrics,
        events,
        commands,
        final_state,
        extras,
        summary: engine.summary(),
        status: status.into(),
    })
}

/// Run-level files derived from every seed's results.
pub fn run_reports(cfg: &ExperimentConfig, outputs: &[SeedOutput]) -> Result<Vec<(String, String)>, HarnessError> {
    let pretty = |v: &Value| {
        let mut s = serde_json::to_string_pretty(v).expect("values serialize");
        s.push('\n');
        s
    };
    match cfg.mode {
        Mode::CfExperiment => {
            let report = cf_aggregate(cfg, outputs);
            let mut v = engine::to_value(&report);
            stamp(&mut v);
            Ok(vec![("cf-report.json".into(), pretty(&v))])
        }
        Mode::CalBench => {
            let mut reports = Vec::new();
            let mut table = String::new();
            for name in &cfg.cal.problems {
                let problem = engine::cal_problem(cfg, name)?;
                let mut cal = Vec::new();
                let mut ga = Vec::new();
                for o in outputs {
                    for t in o.summary.iter().flat_map(|s| s.as_array().cloned().unwrap_or_default()) {
                        let t: commex_core::cal::Trace = serde_json::from_value(t).map_err(HarnessError::core)?;
                        if t.problem == problem.name {
                            match t.optimizer {
                                commex_core::cal::Optimizer::Cal => cal.push(t),
                                commex_core::cal::Optimizer::Ga => ga.push(t),
                            }
                        }
                    }
                }
                let r = commex_core::cal::compare(&problem, &cal, &ga).map_err(HarnessError::core)?;
                let t = r.table();
                if table.is_empty() {
                    table.push_str(&t);
                } else {
                    table.extend(t.lines().skip(1).map(|l| format!("{l}\n")));
                }
                reports.push(engine::to_value(&r));
            }
            let mut v = json!({ "reports": reports });
            stamp(&mut v);
            Ok(vec![("comparison.json".into(), pretty(&v)), ("comparison.tsv".into(), table)])
        }
        Mode::Evoc | Mode::Evoc2 => Ok(Vec::new()),
    }
}

fn cf_aggregate(cfg: &ExperimentConfig, outputs: &[SeedOutput]) -> CfReport {
    let Some(shift_at) = cfg.cf.shift_schedule.iter().copied().min() else {
        return CfReport {
            applicable: false,
            shift_at: None,
            modes: Vec::new(),
            associative_vs_divergent: None,
        };
    };
    let modes = CfMode::ALL
        .iter()
        .map(|&mode| {
            let seeds: Vec<SeedRecovery> = outputs
                .iter()
                .filter_map(|o| o.summary.as_ref()?.as_array().cloned())
                .flatten()
                .filter(|r| serde_json::from_value::<CfMode>(r["mode"].clone()).ok() == Some(mode))
                .filter_map(|r| serde_json::from_value(r["recovery"].clone()).ok())
                .collect();
            let times: Vec<Option<u64>> = seeds.iter().map(|s| s.recovery).collect();
            ModeReport {
                mode,
                median_recovery: censored_median(&times),
                seeds,
            }
        })
        .collect();
    cf_report(shift_at, modes)
}

/// How a run is launched from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replace an existing run directory.
    pub force: bool,
    pub script: Vec<ScriptedCommand>,
}

pub(crate) fn prepare_dir(dir: &Path, force: bool) -> Result<(), HarnessError> {
    if dir.exists() {
        let empty = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?.next().is_none();
        if !empty {
            if !force {
                return Err(HarnessError::Io {
                    path: dir.to_path_buf(),
                    source: std::io::Error::new(
                        std::io::ErrorKind::AlreadyExists,
                        "run directory exists and is not empty (use --force to replace it)",
                    ),
                });
            }
            std::fs::remove_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Runs every seed of one config (no sweep) into `dir`, seeds in parallel.
pub fn run_into(cfg: &ExperimentConfig, dir: &Path, script: &[ScriptedCommand]) -> Result<Vec<SeedOutput>, HarnessError> {
    write_file(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    let outputs = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    let mut source = Scripted::new(seed, script);
                    drive_seed(cfg, seed, Some(&dir.join(seed_dir_name(seed))), &mut source, None)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    for (name, contents) in run_reports(cfg, &outputs)? {
        write_file(&dir.join(name), &contents)?;
    }
    Ok(outputs)
}

pub fn point_dir_name(i: usize) -> String {
    format!("point-{i}")
}

/// Executes an experiment and returns its run directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf, HarnessError> {
    let dir = cfg.output_root().join(cfg.run_name());
    prepare_dir(&dir, opts.force)?;
    if cfg.sweep.is_some() {
        write_file(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
        for (i, point) in cfg.sweep_points()?.iter().enumerate() {
            let sub = dir.join(point_dir_name(i));
            std::fs::create_dir_all(&sub).map_err(|e| HarnessError::io(&sub, e))?;
            run_into(point, &sub, &opts.script)?;
        }
    } else {
        run_into(cfg, &dir, &opts.script)?;
    }
    Ok(dir)
}

/// Loads a config file with dotted overrides and runs it.
pub fn run_config_file(
    path: &Path,
    overrides: &[(String, toml::Value)],
    opts: &RunOptions,
) -> Result<PathBuf, HarnessError> {
    let cfg = ExperimentConfig::load(path, overrides)?;
    run_experiment(&cfg, opts)
}
