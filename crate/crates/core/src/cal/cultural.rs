use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::problem::{Genome, Problem, ProblemKind, RECYCLING_ENCODINGS};
use super::trace::{Budgeted, Optimizer, Trace};
use super::CalError;
use crate::evoc::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalConfig {
    pub width: usize,
    pub height: usize,
    /// Chance an agent imitates its best neighbour instead of inventing.
    pub p_imitate: f64,
    /// Imitation noise as a fraction of the imitator's step scale.
    pub imitation_noise: f64,
    pub imitation: bool,
    /// Choose coordinates by softmax over improvement averages.
    pub learning: bool,
    pub temperature: f64,
    pub stats_rate: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Log step-scale change on success; failures shrink by a quarter of it.
    pub adapt: f64,
    pub focus: bool,
    pub cf_after: u64,
    pub cf_gain: f64,
    pub restructuring: bool,
    pub restructure_after: u64,
}

impl Default for CalConfig {
    fn default() -> Self {
        CalConfig {
            width: 5,
            height: 5,
            p_imitate: 0.25,
            imitation_noise: 0.1,
            imitation: true,
            learning: true,
            temperature: 0.05,
            stats_rate: 0.2,
            sigma0: 0.5,
            sigma_min: 1e-9,
            sigma_max: 2.0,
            adapt: 0.8,
            focus: true,
            cf_after: 20,
            cf_gain: 4.0,
            restructuring: true,
            restructure_after: 60,
        }
    }
}

impl CalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.width == 0 || self.height == 0 {
            return Err(ConfigError::invalid("cal.agent.width", "grid needs at least one agent"));
        }
        for (key, p) in [("cal.agent.p_imitate", self.p_imitate), ("cal.agent.stats_rate", self.stats_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::invalid(key, format!("{p} is outside [0, 1]")));
            }
        }
        if !(self.temperature > 0.0) {
            return Err(ConfigError::invalid("cal.agent.temperature", "must be positive"));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma0 && self.sigma0 <= self.sigma_max) {
            return Err(ConfigError::invalid(
                "cal.agent.sigma0",
                "need 0 < sigma_min <= sigma0 <= sigma_max",
            ));
        }
        if !(self.adapt >= 0.0 && self.imitation_noise >= 0.0) {
            return Err(ConfigError::invalid("cal.agent.adapt", "adapt and imitation_noise must be non-negative"));
        }
        if self.cf_after == 0 || self.restructure_after == 0 {
            return Err(ConfigError::invalid("cal.agent.cf_after", "stagnation thresholds must be positive"));
        }
        if self.cf_gain < 1.0 {
            return Err(ConfigError::invalid("cal.agent.cf_gain", "must be at least 1"));
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalAgent {
    pub solution: Genome,
    pub value: f64,
    pub sigma: f64,
    /// Per-coordinate improvement averages.
    pub coord_stats: Vec<f64>,
    /// Index into the problem's representation library.
    pub encoding: usize,
    pub stagnation: u64,
}

/// Unit step along coordinate `j` of a representation. The second
/// representation turns each consecutive coordinate pair by 45 degrees.
fn direction(encoding: usize, dim: usize, j: usize) -> Vec<f64> {
    let mut d = vec![0.0; dim];
    let paired = encoding == 1 && (j ^ 1) < dim;
    if paired {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b) = (j & !1, j | 1);
        d[a] = h;
        d[b] = if j == a { h } else { -h };
    } else {
        d[j] = 1.0;
    }
    d
}

fn softmax_pick<R: Rng + ?Sized>(stats: &[f64], temperature: f64, exclude: &[usize], rng: &mut R) -> usize {
    let top = stats.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = stats
        .iter()
        .enumerate()
        .map(|(j, s)| if exclude.contains(&j) { 0.0 } else { ((s - top) / temperature).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (j, wj) in w.iter().enumerate() {
        if *wj > 0.0 {
            if u < *wj {
                return j;
            }
            u -= wj;
        }
    }
    (0..stats.len()).rev().find(|j| !exclude.contains(j)).expect("a coordinate is left")
}

struct Cal<'a> {
    cfg: &'a CalConfig,
    problem: &'a Problem,
    agents: Vec<CalAgent>,
    rng: ChaCha8Rng,
}

impl Cal<'_> {
    fn neighbours(&self, k: usize) -> [usize; 4] {
        let (w, h) = (self.cfg.width, self.cfg.height);
        let (x, y) = (k % w, k / w);
        [
            x + ((y + h - 1) % h) * w,
            (x + 1) % w + y * w,
            x + ((y + 1) % h) * w,
            (x + w - 1) % w + y * w,
        ]
    }

    fn coords_to_change(&mut self, a: &CalAgent) -> Vec<usize> {
        let n = self.problem.coords();
        let count = match self.problem.kind {
            ProblemKind::Continuous { .. } => 1,
            ProblemKind::Recycling(_) => (1 + a.sigma.floor() as usize).min(n),
        };
        let mut chosen = Vec::with_capacity(count);
        for _ in 0..count {
            let j = if self.cfg.learning {
                softmax_pick(&a.coord_stats, self.cfg.temperature, &chosen, &mut self.rng)
            } else {
                let free: Vec<usize> = (0..n).filter(|j| !chosen.contains(j)).collect();
                *free.choose(&mut self.rng).expect("a coordinate is left")
            };
            chosen.push(j);
        }
        chosen
    }

    fn invent(&mut self, a: &CalAgent, coords: &[usize]) -> Genome {
        match (&self.problem.kind, &a.solution) {
            (ProblemKind::Continuous { .. }, Genome::Real(x)) => {
                let mut y = x.clone();
                for &j in coords {
                    let step: f64 = a.sigma * self.rng.sample::<f64, _>(StandardNormal);
                    for (yi, di) in y.iter_mut().zip(direction(a.encoding, x.len(), j)) {
                        *yi += step * di;
                    }
                }
                Genome::Real(y)
            }
            (ProblemKind::Recycling(t), Genome::Assign(s)) => {
                let mut y = s.clone();
                for &j in coords {
                    let options: Vec<_> = t
                        .choices(j, RECYCLING_ENCODINGS[a.encoding])
                        .into_iter()
                        .filter(|c| *c != s[j])
                        .collect();
                    if let Some(c) = options.choose(&mut self.rng) {
                        y[j] = *c;
                    }
                }
                Genome::Assign(y)
            }
            _ => unreachable!("agents hold genomes of their problem's kind"),
        }
    }

    fn perturb(&mut self, g: &Genome, sigma: f64, encoding: usize) -> Genome {
        let noise = self.cfg.imitation_noise;
        match (&self.problem.kind, g) {
            (ProblemKind::Continuous { .. }, Genome::Real(x)) => Genome::Real(
                x.iter()
                    .map(|xi| xi + noise * sigma * self.rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
            (ProblemKind::Recycling(t), Genome::Assign(s)) => {
                let mut y = s.clone();
                if !y.is_empty() && self.rng.random_bool(noise.min(1.0)) {
                    let j = self.rng.random_range(0..y.len());
                    y[j] = *t.choices(j, RECYCLING_ENCODINGS[encoding]).choose(&mut self.rng).expect("None is a choice");
                }
                Genome::Assign(y)
            }
            _ => unreachable!("agents hold genomes of their problem's kind"),
        }
    }

    /// One agent's turn: one candidate, one evaluation. `None` when the
    /// budget ran out.
    fn turn(&mut self, k: usize, ev: &mut Budgeted) -> Result<Option<()>, CalError> {
        let a = self.agents[k].clone();
        let teacher = if self.cfg.imitation && self.rng.random_bool(self.cfg.p_imitate) {
            self.neighbours(k)
                .into_iter()
                .filter(|&n| self.agents[n].value < a.value)
                .min_by(|&p, &q| self.agents[p].value.total_cmp(&self.agents[q].value))
        } else {
            None
        };
        let improved = if let Some(n) = teacher {
            let model = self.agents[n].clone();
            let cand = self.perturb(&model.solution, a.sigma, model.encoding);
            let Some(f) = ev.eval(&cand, model.encoding)? else { return Ok(None) };
            let me = &mut self.agents[k];
            if f < me.value {
                me.solution = cand;
                me.value = f;
                if me.encoding != model.encoding {
                    me.encoding = model.encoding;
                    me.coord_stats = model.coord_stats;
                }
                true
            } else {
                false
            }
        } else {
            let coords = self.coords_to_change(&a);
            let cand = self.invent(&a, &coords);
            let Some(f) = ev.eval(&cand, a.encoding)? else { return Ok(None) };
            let rate = self.cfg.stats_rate;
            let me = &mut self.agents[k];
            let gain = ((me.value - f) / (me.value.abs() + 1e-12)).clamp(0.0, 1.0);
            let gain = if me.value.is_finite() { gain } else { 1.0 };
            for &j in &coords {
                me.coord_stats[j] = (1.0 - rate) * me.coord_stats[j] + rate * gain;
            }
            let better = f < me.value;
            if f <= me.value {
                me.solution = cand;
                me.value = f;
            }
            better
        };
        self.adapt(k, improved, &mut ev.trace);
        Ok(Some(()))
    }

    fn adapt(&mut self, k: usize, improved: bool, trace: &mut Trace) {
        let cfg = self.cfg;
        let libraries = self.problem.encodings();
        let me = &mut self.agents[k];
        if improved {
            me.sigma *= cfg.adapt.exp();
            me.stagnation = 0;
        } else {
            me.sigma *= (-cfg.adapt / 4.0).exp();
            me.stagnation += 1;
            if cfg.focus && me.stagnation % cfg.cf_after == 0 {
                me.sigma = me.sigma.max(cfg.sigma0) * cfg.cf_gain;
            }
            if cfg.restructuring && me.stagnation >= cfg.restructure_after {
                let next = (me.encoding + 1) % libraries;
                let moved = self.problem.reencode(&me.solution, next);
                if moved != me.solution {
                    me.value = f64::INFINITY;
                }
                me.solution = moved;
                me.encoding = next;
                me.coord_stats.iter_mut().for_each(|s| *s = 0.0);
                me.stagnation = 0;
                trace.restructures += 1;
            }
        }
        me.sigma = me.sigma.clamp(cfg.sigma_min, cfg.sigma_max);
    }
}

/// Runs the cultural optimizer until the problem's budget is spent.
///
/// A torus of agents each hold one solution and improve it in place. Per
/// iteration every agent produces exactly one candidate, by inventing a
/// step along coordinates favoured by its own improvement history, or by
/// copying a better neighbour with a little noise. Agents that stop
/// improving widen their steps and then switch representation.
///
/// This is not a belief-space cultural algorithm in the evolutionary
/// programming sense: nothing here models how a culture's own norms evolve.
pub fn cal_run(problem: &Problem, cfg: &CalConfig, seed: u64) -> Result<Trace, CalError> {
    cfg.validate().map_err(|e| CalError::Config(e.to_string()))?;
    let mut ev = Budgeted::new(Optimizer::Cal, problem, seed);
    let mut cal = Cal {
        cfg,
        problem,
        agents: Vec::with_capacity(cfg.agents()),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut made = 0;
    for _ in 0..cfg.agents() {
        let solution = problem.random(&mut cal.rng, 0);
        let Some(value) = ev.eval(&solution, 0)? else { break };
        made += 1;
        cal.agents.push(CalAgent {
            solution,
            value,
            sigma: cfg.sigma0,
            coord_stats: vec![0.0; problem.coords()],
            encoding: 0,
            stagnation: 0,
        });
    }
    if made > 0 {
        ev.trace.candidates.push(made);
        record_sigma(&cal.agents, &mut ev.trace);
    }
    while made == cfg.agents() && !ev.exhausted() {
        let mut count = 0;
        for k in 0..cfg.agents() {
            if cal.turn(k, &mut ev)?.is_none() {
                break;
            }
            count += 1;
        }
        if count > 0 {
            ev.trace.candidates.push(count);
            record_sigma(&cal.agents, &mut ev.trace);
        }
    }
    Ok(ev.trace)
}

fn record_sigma(agents: &[CalAgent], trace: &mut Trace) {
    let lo = agents.iter().map(|a| a.sigma).fold(f64::INFINITY, f64::min);
    let hi = agents.iter().map(|a| a.sigma).fold(f64::NEG_INFINITY, f64::max);
    trace.sigma_range.push([lo, hi]);
}
