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
pub struct GaConfig {
    pub population: usize,
    pub tournament: usize,
    pub crossover: f64,
    /// BLX-α extension for real genomes.
    pub blx_alpha: f64,
    /// Per-gene mutation chance; `None` means `1 / genes`.
    pub mutation_rate: Option<f64>,
    pub mutation_sigma: f64,
    pub elites: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            tournament: 3,
            crossover: 0.9,
            blx_alpha: 0.5,
            mutation_rate: None,
            mutation_sigma: 0.05,
            elites: 2,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population < 2 {
            return Err(ConfigError::invalid("cal.ga.population", "needs at least 2"));
        }
        if self.tournament == 0 {
            return Err(ConfigError::invalid("cal.ga.tournament", "must be positive"));
        }
        if self.elites >= self.population {
            return Err(ConfigError::invalid("cal.ga.elites", "must be below the population size"));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(ConfigError::invalid("cal.ga.crossover", "outside [0, 1]"));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return Err(ConfigError::invalid("cal.ga.mutation_rate", "outside [0, 1]"));
            }
        }
        if !(self.blx_alpha >= 0.0 && self.mutation_sigma >= 0.0) {
            return Err(ConfigError::invalid("cal.ga.blx_alpha", "blx_alpha and mutation_sigma must be non-negative"));
        }
        Ok(())
    }
}

fn tournament<'p, R: Rng + ?Sized>(pop: &'p [(Genome, f64)], k: usize, rng: &mut R) -> &'p Genome {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..k {
        let c = rng.random_range(0..pop.len());
        if pop[c].1 < pop[best].1 {
            best = c;
        }
    }
    &pop[best].0
}

/// Generational GA in the problem's default representation: tournament
/// selection, BLX-α or uniform crossover, per-gene mutation and elitism.
pub fn ga_run(problem: &Problem, cfg: &GaConfig, seed: u64) -> Result<Trace, CalError> {
    cfg.validate().map_err(|e| CalError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ev = Budgeted::new(Optimizer::Ga, problem, seed);
    let genes = problem.coords();
    let pm = cfg.mutation_rate.unwrap_or(1.0 / genes.max(1) as f64);

    let mut pop: Vec<(Genome, f64)> = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        let g = problem.random(&mut rng, 0);
        let Some(f) = ev.eval(&g, 0)? else { break };
        pop.push((g, f));
    }
    if !pop.is_empty() {
        ev.trace.candidates.push(pop.len());
    }
    while pop.len() == cfg.population && !ev.exhausted() {
        pop.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut next: Vec<(Genome, f64)> = pop[..cfg.elites].to_vec();
        let mut made = 0;
        while next.len() < cfg.population {
            let a = tournament(&pop, cfg.tournament, &mut rng);
            let b = tournament(&pop, cfg.tournament, &mut rng);
            let child = breed(problem, cfg, pm, a, b, &mut rng);
            let Some(f) = ev.eval(&child, 0)? else { break };
            made += 1;
            next.push((child, f));
        }
        if made > 0 {
            ev.trace.candidates.push(made);
        }
        if next.len() < cfg.population {
            break;
        }
        pop = next;
    }
    Ok(ev.trace)
}

fn breed<R: Rng + ?Sized>(problem: &Problem, cfg: &GaConfig, pm: f64, a: &Genome, b: &Genome, rng: &mut R) -> Genome {
    let cross = rng.random_bool(cfg.crossover);
    match (&problem.kind, a, b) {
        (ProblemKind::Continuous { .. }, Genome::Real(x), Genome::Real(y)) => Genome::Real(
            x.iter()
                .zip(y)
                .map(|(&xi, &yi)| {
                    let mut g = if cross {
                        let (lo, hi) = (xi.min(yi), xi.max(yi));
                        let ext = cfg.blx_alpha * (hi - lo);
                        if hi - lo > 0.0 || ext > 0.0 {
                            rng.random_range(lo - ext..=hi + ext)
                        } else {
                            lo
                        }
                    } else {
                        xi
                    };
                    if rng.random_bool(pm) {
                        g += cfg.mutation_sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                    g
                })
                .collect(),
        ),
        (ProblemKind::Recycling(t), Genome::Assign(x), Genome::Assign(y)) => Genome::Assign(
            x.iter()
                .zip(y)
                .enumerate()
                .map(|(s, (&xi, &yi))| {
                    let g = if cross && rng.random_bool(0.5) { yi } else { xi };
                    if rng.random_bool(pm) {
                        *t.choices(s, RECYCLING_ENCODINGS[0]).choose(rng).expect("None is a choice")
                    } else {
                        g
                    }
                })
                .collect(),
        ),
        _ => unreachable!("parents match their problem"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generations_resample_the_population() {
        let p = Problem::rosenbrock(2, 1000).unwrap();
        let t = ga_run(&p, &GaConfig::default(), 4).unwrap();
        assert_eq!(t.candidates[0], 50);
        let (last, middle) = t.candidates[1..].split_last().unwrap();
        assert!(middle.iter().all(|&c| c == 48) && *last <= 48);
        assert_eq!(t.candidates.iter().sum::<usize>(), 1000);
        assert_eq!(t.evaluations(), 1000);
        assert_eq!(p.calls(), 1000);
    }

    #[test]
    fn elites_bound_the_population() {
        let cfg = GaConfig {
            elites: 50,
            ..GaConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().key(), "cal.ga.elites");
    }
}
