//! Adapters that drive each mode one iteration at a time.

use commex_core::cal::{cal_run, ga_run, Problem, RecyclingSpec, Trace};
use commex_core::evoc::World;
use commex_core::exchange::{niche_events, ExchangeEvent, ExchangeWorld};
use commex_core::focus::{recovery_time, CfMode, SeedRecovery};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::Command;
use crate::config::{ExperimentConfig, Mode};
use crate::HarnessError;

/// A file written next to the standard four in a seed directory.
pub struct ExtraFile {
    pub name: String,
    pub contents: String,
}

/// One seed of one mode, advanced by the runner between command boundaries.
pub trait Engine: Send {
    /// Iterations completed.
    fn iteration(&self) -> u64;
    fn finished(&self) -> bool;
    /// Advances one iteration and returns its metrics record.
    fn step(&mut self) -> Result<Value, HarnessError>;
    fn drain_events(&mut self) -> Vec<Value>;
    /// Validates a steering command without applying it.
    fn check(&self, cmd: &Command) -> Result<(), HarnessError>;
    fn apply(&mut self, cmd: &Command) -> Result<(), HarnessError>;
    /// Current objects report, for modes that have objects.
    fn objects(&self) -> Option<Value> {
        None
    }
    /// Closes the run and returns the final state.
    fn finish(&mut self) -> Result<Value, HarnessError>;
    fn extra_files(&self) -> Vec<ExtraFile> {
        Vec::new()
    }
    /// Per-seed result folded into run-level reports.
    fn summary(&self) -> Option<Value> {
        None
    }
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("records serialize")
}

fn lifecycle_only(mode: Mode, cmd: &Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Pause | Command::Resume | Command::Stop => Ok(()),
        other => Err(HarnessError::Command(format!(
            "{} runs accept only pause, resume and stop, not {}",
            mode,
            other.kind()
        ))),
    }
}

pub fn build(cfg: &ExperimentConfig, seed: u64) -> Result<Box<dyn Engine>, HarnessError> {
    Ok(match cfg.mode {
        Mode::Evoc => Box::new(EvocEngine::new(cfg, seed)?),
        Mode::Evoc2 => Box::new(ExchangeEngine::new(cfg, seed)?),
        Mode::CfExperiment => Box::new(CfEngine::new(cfg, seed)?),
        Mode::CalBench => Box::new(CalBenchEngine::new(cfg, seed)?),
    })
}

pub struct EvocEngine {
    world: World,
    iterations: u64,
}

impl EvocEngine {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self, HarnessError> {
        let wc = cfg.world_config();
        let iterations = wc.iterations;
        let world = World::new(wc, seed).map_err(|e| HarnessError::Config {
            key: e.key().to_string(),
            message: e.to_string(),
        })?;
        Ok(EvocEngine { world, iterations })
    }
}

impl Engine for EvocEngine {
    fn iteration(&self) -> u64 {
        self.world.iteration()
    }

    fn finished(&self) -> bool {
        self.world.iteration() >= self.iterations
    }

    fn step(&mut self) -> Result<Value, HarnessError> {
        self.world.step();
        Ok(to_value(&self.world.metrics()))
    }

    fn drain_events(&mut self) -> Vec<Value> {
        let mut out: Vec<Value> = self.world.drain_events().iter().map(to_value).collect();
        let rr = self.world.config().rr;
        if rr.enabled && self.world.iteration() % rr.checkpoint_interval == 0 {
            out.push(json!({
                "kind": "top_set",
                "iteration": self.world.iteration(),
                "chains": self.world.top_set(rr.top_k),
            }));
        }
        out
    }

    fn check(&self, cmd: &Command) -> Result<(), HarnessError> {
        lifecycle_only(Mode::Evoc, cmd)
    }

    fn apply(&mut self, cmd: &Command) -> Result<(), HarnessError> {
        self.check(cmd)
    }

    fn finish(&mut self) -> Result<Value, HarnessError> {
        Ok(to_value(&self.world.snapshot()))
    }
}

pub struct ExchangeEngine {
    world: ExchangeWorld,
    iterations: u64,
    log: Vec<ExchangeEvent>,
    pending: Vec<ExchangeEvent>,
}

impl ExchangeEngine {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self, HarnessError> {
        let ec = cfg.exchange_config();
        let iterations = ec.iterations;
        let mut world = ExchangeWorld::from_config(ec, seed).map_err(HarnessError::core)?;
        let pending = world.drain_events();
        Ok(ExchangeEngine {
            world,
            iterations,
            log: Vec::new(),
            pending,
        })
    }

    fn collect(&mut self) {
        let evs = self.world.drain_events();
        self.pending.extend(evs);
    }
}

impl Engine for ExchangeEngine {
    fn iteration(&self) -> u64 {
        self.world.iteration()
    }

    fn finished(&self) -> bool {
        self.world.iteration() >= self.iterations
    }

    fn step(&mut self) -> Result<Value, HarnessError> {
        let m = self.world.step().map_err(HarnessError::core)?;
        self.collect();
        Ok(to_value(&m))
    }

    fn drain_events(&mut self) -> Vec<Value> {
        self.collect();
        let evs = std::mem::take(&mut self.pending);
        let out = evs.iter().map(to_value).collect();
        self.log.extend(evs);
        out
    }

    fn check(&self, cmd: &Command) -> Result<(), HarnessError> {
        let core = |e: commex_core::exchange::ExchangeError| HarnessError::Command(e.to_string());
        match cmd {
            Command::DefineContext {
                concept,
                context,
                weights,
            } => self.world.check_define_context(concept, context, weights).map_err(core),
            Command::RateObject { object, rating } => self.world.check_rating(*object, *rating).map_err(core),
            _ => Ok(()),
        }
    }

    fn apply(&mut self, cmd: &Command) -> Result<(), HarnessError> {
        let core = |e: commex_core::exchange::ExchangeError| HarnessError::Command(e.to_string());
        match cmd {
            Command::DefineContext {
                concept,
                context,
                weights,
            } => self.world.define_context(concept, context, weights).map_err(core)?,
            Command::RateObject { object, rating } => self.world.rate_object(*object, *rating).map_err(core)?,
            _ => {}
        }
        self.collect();
        Ok(())
    }

    fn objects(&self) -> Option<Value> {
        Some(json!({
            "iteration": self.world.iteration(),
            "objects": self.world.objects_view(),
        }))
    }

    fn finish(&mut self) -> Result<Value, HarnessError> {
        self.world.finish();
        self.collect();
        Ok(self.world.snapshot())
    }

    fn extra_files(&self) -> Vec<ExtraFile> {
        // The log is complete only once finish() has emitted run_end.
        let niches = niche_events(&self.log).unwrap_or_default();
        let mut contents = String::new();
        for n in &niches {
            let mut v = to_value(n);
            crate::runner::stamp(&mut v);
            contents.push_str(&v.to_string());
            contents.push('\n');
        }
        vec![ExtraFile {
            name: "niches.jsonl".into(),
            contents,
        }]
    }

    fn summary(&self) -> Option<Value> {
        Some(json!({ "niches": niche_events(&self.log).map(|n| n.len()).unwrap_or(0) }))
    }
}

/// Runs the shifting-landscape comparison for one seed: each focus mode in
/// turn on the same seed, records tagged with `cf_mode`.
pub struct CfEngine {
    cfg: ExperimentConfig,
    seed: u64,
    modes: Vec<CfMode>,
    current: usize,
    world: World,
    done: u64,
    series: Vec<Vec<commex_core::evoc::MetricsRecord>>,
    snapshots: Vec<Value>,
}

impl CfEngine {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self, HarnessError> {
        let modes = CfMode::ALL.to_vec();
        let world = Self::world_for(cfg, modes[0], seed)?;
        Ok(CfEngine {
            cfg: cfg.clone(),
            seed,
            current: 0,
            world,
            done: 0,
            series: vec![Vec::new(); modes.len()],
            snapshots: Vec::new(),
            modes,
        })
    }

    fn world_for(cfg: &ExperimentConfig, mode: CfMode, seed: u64) -> Result<World, HarnessError> {
        let mut wc = cfg.world_config();
        wc.cf.mode = mode;
        World::new(wc, seed).map_err(|e| HarnessError::Config {
            key: e.key().to_string(),
            message: e.to_string(),
        })
    }

    fn per_mode(&self) -> u64 {
        self.cfg.world.iterations
    }
}

impl Engine for CfEngine {
    fn iteration(&self) -> u64 {
        self.done
    }

    fn finished(&self) -> bool {
        self.done >= self.per_mode() * self.modes.len() as u64
    }

    fn step(&mut self) -> Result<Value, HarnessError> {
        if self.world.iteration() >= self.per_mode() {
            self.snapshots.push(json!({
                "cf_mode": self.modes[self.current],
                "world": self.world.snapshot(),
            }));
            self.current += 1;
            self.world = Self::world_for(&self.cfg, self.modes[self.current], self.seed)?;
        }
        self.world.step();
        self.done += 1;
        let m = self.world.metrics();
        self.series[self.current].push(m.clone());
        let mut v = to_value(&m);
        v["cf_mode"] = to_value(&self.modes[self.current]);
        Ok(v)
    }

    fn drain_events(&mut self) -> Vec<Value> {
        let mode = to_value(&self.modes[self.current]);
        self.world
            .drain_events()
            .iter()
            .map(|e| {
                let mut v = to_value(e);
                v["cf_mode"] = mode.clone();
                v
            })
            .collect()
    }

    fn check(&self, cmd: &Command) -> Result<(), HarnessError> {
        lifecycle_only(Mode::CfExperiment, cmd)
    }

    fn apply(&mut self, cmd: &Command) -> Result<(), HarnessError> {
        self.check(cmd)
    }

    fn finish(&mut self) -> Result<Value, HarnessError> {
        let mut all = self.snapshots.clone();
        all.push(json!({
            "cf_mode": self.modes[self.current],
            "world": self.world.snapshot(),
        }));
        Ok(json!({ "iteration": self.done, "modes": all }))
    }

    fn summary(&self) -> Option<Value> {
        let shift_at = self.cfg.cf.shift_schedule.iter().copied().min()?;
        let rec: Vec<Value> = self
            .modes
            .iter()
            .zip(&self.series)
            .map(|(mode, s)| {
                let (pre_shift_mean, recovery) = recovery_time(s, shift_at);
                json!({
                    "mode": mode,
                    "recovery": to_value(&SeedRecovery { seed: self.seed, pre_shift_mean, recovery }),
                })
            })
            .collect();
        Some(Value::Array(rec))
    }
}

/// Runs both optimizers on every configured problem up front, then replays
/// their best-so-far curves as checkpoint records.
pub struct CalBenchEngine {
    traces: Vec<(Trace, Trace)>,
    records: Vec<Value>,
    done: u64,
    reported: bool,
}

pub fn cal_problem(cfg: &ExperimentConfig, name: &str) -> Result<Problem, HarnessError> {
    let c = &cfg.cal;
    match name {
        "rosenbrock" => Problem::rosenbrock(c.dimension, c.budget).map_err(HarnessError::core),
        "recycling" => {
            let spec = match &c.recycling {
                Some(p) => {
                    let path = std::path::Path::new(p);
                    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                    RecyclingSpec::from_json(&text).map_err(|e| HarnessError::Config {
                        key: "cal.recycling".into(),
                        message: e.to_string(),
                    })?
                }
                None => RecyclingSpec::fixture(),
            };
            Problem::recycling(spec, c.recycling_budget).map_err(HarnessError::core)
        }
        other => Err(HarnessError::Config {
            key: "cal.problems".into(),
            message: format!("unknown problem `{other}`"),
        }),
    }
}

impl CalBenchEngine {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self, HarnessError> {
        let mut traces = Vec::new();
        let mut records = Vec::new();
        for name in &cfg.cal.problems {
            let p = cal_problem(cfg, name)?;
            let cal = cal_run(&p, &cfg.cal.agent, seed).map_err(HarnessError::core)?;
            let ga = ga_run(&p, &cfg.cal.ga, seed).map_err(HarnessError::core)?;
            let best_at = |t: &Trace, e: u64| t.best_so_far.get(e.min(t.evaluations()) as usize - 1).copied();
            let mut e = 0;
            while e < p.budget {
                e = (e + cfg.cal.record_every).min(p.budget);
                records.push(json!({
                    "problem": name,
                    "evaluations": e,
                    "cal_best": best_at(&cal, e),
                    "ga_best": best_at(&ga, e),
                }));
            }
            traces.push((cal, ga));
        }
        Ok(CalBenchEngine {
            traces,
            records,
            done: 0,
            reported: false,
        })
    }
}

impl Engine for CalBenchEngine {
    fn iteration(&self) -> u64 {
        self.done
    }

    fn finished(&self) -> bool {
        self.done as usize >= self.records.len()
    }

    fn step(&mut self) -> Result<Value, HarnessError> {
        let mut v = self.records[self.done as usize].clone();
        self.done += 1;
        v["iteration"] = json!(self.done);
        Ok(v)
    }

    fn drain_events(&mut self) -> Vec<Value> {
        if !self.finished() || self.reported {
            return Vec::new();
        }
        self.reported = true;
        self.traces
            .iter()
            .flat_map(|(c, g)| [c, g])
            .map(|t| {
                json!({
                    "kind": "trace_summary",
                    "optimizer": t.optimizer,
                    "problem": t.problem,
                    "evaluations": t.evaluations(),
                    "final_best": t.final_best(),
                    "evaluations_to_target": t.evaluations_to_target(),
                    "restructures": t.restructures,
                })
            })
            .collect()
    }

    fn check(&self, cmd: &Command) -> Result<(), HarnessError> {
        lifecycle_only(Mode::CalBench, cmd)
    }

    fn apply(&mut self, cmd: &Command) -> Result<(), HarnessError> {
        self.check(cmd)
    }

    fn finish(&mut self) -> Result<Value, HarnessError> {
        let best: Vec<Value> = self
            .traces
            .iter()
            .flat_map(|(c, g)| [c, g])
            .map(|t| json!({ "optimizer": t.optimizer, "problem": t.problem, "best": t.best, "final_best": t.final_best() }))
            .collect();
        Ok(json!({ "iteration": self.done, "best": best }))
    }

    fn extra_files(&self) -> Vec<ExtraFile> {
        let mut contents = String::new();
        for (c, g) in &self.traces {
            for t in [c, g] {
                contents.push_str(&t.to_json_line());
                contents.push('\n');
            }
        }
        vec![ExtraFile {
            name: "traces.jsonl".into(),
            contents,
        }]
    }

    fn summary(&self) -> Option<Value> {
        Some(Value::Array(
            self.traces
                .iter()
                .flat_map(|(c, g)| [c, g])
                .map(to_value)
                .collect(),
        ))
    }
}
