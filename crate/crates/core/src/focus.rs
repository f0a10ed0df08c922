//! Contextual focus: fitness-driven modulation of reactivity.
//!
//! An agent whose idea is clearly worse than the population's shifts into a
//! more exploratory mode by raising its reactivity α (the per-part mutation
//! probability). Once its fitness recovers, α decays back to baseline.
//!
//! The shifting-landscape experiment lives here too: the fitness functional
//! is composed with a random per-part value permutation at scheduled
//! iterations, and [`cf_experiment`] measures how quickly populations under
//! each mode regain their pre-shift mean fitness.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evoc::{self, ConfigError, World, WorldConfig};
use crate::gesture::{optimal_set, Landscape, PARTS, POSITIONS};

/// Which processing mode a low-fitness agent shifts into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CfMode {
    #[default]
    Off,
    Divergent,
    Associative,
}

impl CfMode {
    pub const ALL: [CfMode; 3] = [CfMode::Off, CfMode::Divergent, CfMode::Associative];
}

impl fmt::Display for CfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CfMode::Off => "off",
            CfMode::Divergent => "divergent",
            CfMode::Associative => "associative",
        })
    }
}

impl std::str::FromStr for CfMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(CfMode::Off),
            "divergent" => Ok(CfMode::Divergent),
            "associative" => Ok(CfMode::Associative),
            other => Err(format!("unknown cf mode `{other}` (expected off, divergent, associative)")),
        }
    }
}

/// Reactivity policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FocusPolicy {
    pub mode: CfMode,
    pub alpha0: f64,
    pub alpha_max: f64,
    pub gain: f64,
    pub decay: f64,
    pub threshold_frac: f64,
    /// Softmax sharpness of associative mutation.
    pub beta: f64,
    /// Iterations after which the fitness landscape is permuted.
    pub shift_schedule: Vec<u64>,
}

impl Default for FocusPolicy {
    fn default() -> Self {
        FocusPolicy {
            mode: CfMode::Off,
            alpha0: 1.0 / 6.0,
            alpha_max: 0.5,
            gain: 2.0,
            decay: 0.5,
            threshold_frac: 0.8,
            beta: 2.0,
            shift_schedule: Vec::new(),
        }
    }
}

impl FocusPolicy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| Err(ConfigError::invalid(format!("cf.{key}"), msg));
        if !(self.alpha0 > 0.0 && self.alpha0 <= self.alpha_max && self.alpha_max <= 1.0) {
            return bad("alpha0", "need 0 < alpha0 <= alpha_max <= 1");
        }
        if !(self.gain > 1.0) {
            return bad("gain", "need gain > 1");
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad("decay", "need 0 < decay < 1");
        }
        if !(self.threshold_frac > 0.0 && self.threshold_frac <= 1.0) {
            return bad("threshold_frac", "need 0 < threshold_frac <= 1");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta", "need a finite beta >= 0");
        }
        Ok(())
    }

    /// Iterations needed for a capped α to decay back to baseline.
    pub fn relaxation_bound(&self) -> u32 {
        ((self.alpha0 / self.alpha_max).ln() / self.decay.ln()).ceil().max(0.0) as u32
    }
}

/// New reactivity for an agent given its fitness and the population mean.
pub fn update_reactivity(alpha: f64, fitness: f64, population_mean: f64, policy: &FocusPolicy) -> f64 {
    if fitness < policy.threshold_frac * population_mean {
        (alpha * policy.gain).min(policy.alpha_max)
    } else {
        (alpha * policy.decay).max(policy.alpha0)
    }
}

/// Draws a landscape permutation whose optimal set is disjoint from the
/// current one.
pub fn random_shift<R: Rng + ?Sized>(current: &Landscape, rng: &mut R) -> Landscape {
    let before = current.optimal_set();
    loop {
        let mut map = [POSITIONS; PARTS];
        for row in map.iter_mut() {
            row.shuffle(rng);
        }
        let perm = Landscape::from_permutations(map);
        let next = perm.then(current);
        let after = next.optimal_set();
        if after.iter().all(|a| !before.contains(a)) {
            return next;
        }
    }
}

/// Applies every shift scheduled for the world's current iteration.
///
/// Returns whether the landscape changed.
pub fn landscape_shift(world: &mut World, schedule: &[u64]) -> bool {
    let due = schedule.iter().filter(|&&t| t == world.iteration()).count();
    for _ in 0..due {
        world.shift_landscape();
    }
    due > 0
}

/// Per-seed recovery measurement for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecovery {
    pub seed: u64,
    pub pre_shift_mean: f64,
    /// Iterations from the shift until mean fitness regains 90% of its
    /// pre-shift value; `None` if it never did within the run.
    pub recovery: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: CfMode,
    pub seeds: Vec<SeedRecovery>,
    /// Median over seeds, censored recoveries counting as infinite.
    pub median_recovery: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfReport {
    pub applicable: bool,
    pub shift_at: Option<u64>,
    pub modes: Vec<ModeReport>,
    /// Which of divergent and associative recovered faster at the median,
    /// if both were run.
    pub associative_vs_divergent: Option<String>,
}

impl CfReport {
    pub fn mode(&self, mode: CfMode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

/// Fraction of the pre-shift mean that counts as recovered.
pub const RECOVERY_FRACTION: f64 = 0.9;

/// Median of optional values where `None` sorts above every number.
pub fn censored_median(values: &[Option<u64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values
        .iter()
        .map(|x| x.map_or(f64::INFINITY, |t| t as f64))
        .collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    m.is_finite().then_some(m)
}

/// Recovery time after the first shift in a metric series.
pub fn recovery_time(series: &[evoc::MetricsRecord], shift_at: u64) -> (f64, Option<u64>) {
    let pre = series
        .iter()
        .find(|r| r.iteration == shift_at)
        .map_or(0.0, |r| r.mean_fitness);
    let rec = series
        .iter()
        .filter(|r| r.iteration > shift_at)
        .find(|r| r.mean_fitness >= RECOVERY_FRACTION * pre)
        .map(|r| r.iteration - shift_at);
    (pre, rec)
}

/// Runs the shifting-landscape comparison for each mode over the same seeds.
pub fn cf_experiment(base: &WorldConfig, modes: &[CfMode], seeds: &[u64]) -> Result<CfReport, ConfigError> {
    let shift_at = base.cf.shift_schedule.iter().copied().min();
    let Some(shift_at) = shift_at else {
        return Ok(CfReport {
            applicable: false,
            shift_at: None,
            modes: Vec::new(),
            associative_vs_divergent: None,
        });
    };
    let mut reports = Vec::new();
    for &mode in modes {
        let mut cfg = base.clone();
        cfg.cf.mode = mode;
        let mut per_seed = Vec::new();
        for &seed in seeds {
            let series = evoc::run(&cfg, seed)?;
            let (pre_shift_mean, recovery) = recovery_time(&series, shift_at);
            per_seed.push(SeedRecovery { seed, pre_shift_mean, recovery });
        }
        let times: Vec<_> = per_seed.iter().map(|s| s.recovery).collect();
        reports.push(ModeReport {
            mode,
            median_recovery: censored_median(&times),
            seeds: per_seed,
        });
    }
    Ok(cf_report(shift_at, reports))
}

/// Assembles a report from per-mode results, adding the
/// associative-versus-divergent comparison when both modes ran.
pub fn cf_report(shift_at: u64, reports: Vec<ModeReport>) -> CfReport {
    let pick = |m: CfMode| reports.iter().find(|r| r.mode == m).map(|r| r.median_recovery);
    let associative_vs_divergent = match (pick(CfMode::Associative), pick(CfMode::Divergent)) {
        (Some(a), Some(d)) => {
            let a = a.unwrap_or(f64::INFINITY);
            let d = d.unwrap_or(f64::INFINITY);
            Some(if a < d {
                format!("associative recovered faster (median {a} vs {d})")
            } else if d < a {
                format!("divergent recovered faster (median {d} vs {a})")
            } else {
                format!("tie (median {a})")
            })
        }
        _ => None,
    };
    CfReport {
        applicable: true,
        shift_at: Some(shift_at),
        modes: reports,
        associative_vs_divergent,
    }
}

/// The post-shift optimal set is the pre-shift one pulled back through the
/// permutation.
pub fn shifted_optima(landscape: &Landscape) -> Vec<crate::gesture::Action> {
    let mut v: Vec<_> = optimal_set().iter().map(|a| landscape.preimage(a)).collect();
    v.sort();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::{enumerate_action_space, Action, SPACE_SIZE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reactivity_floor_cap_and_gain() {
        let p = FocusPolicy::default();
        assert_eq!(update_reactivity(p.alpha0, 11.0, 10.0, &p), p.alpha0);
        assert_eq!(update_reactivity(p.alpha_max, 1.0, 10.0, &p), p.alpha_max);
        let up = update_reactivity(1.0 / 6.0, 1.0, 10.0, &p);
        assert!((up - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn relaxation_bound_default() {
        // alpha_max * d^k <= alpha0 first holds at k = 2
        assert_eq!(FocusPolicy::default().relaxation_bound(), 2);
    }

    #[test]
    fn policy_validation_names_key() {
        let p = FocusPolicy { decay: 1.5, ..Default::default() };
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("cf.decay"), "{err}");
        let p = FocusPolicy { alpha0: 0.6, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn shift_preserves_multiset_and_moves_optima() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = Landscape::default();
        let shifted = random_shift(&base, &mut rng);
        let mut before: Vec<f64> = enumerate_action_space().iter().map(|(_, f)| f.0).collect();
        let mut after: Vec<f64> = (0..SPACE_SIZE)
            .map(|n| shifted.fitness(&Action::from_index(n)).0)
            .collect();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        assert_eq!(before, after);

        // brute-force optimal set after the shift
        let mut brute: Vec<Action> = (0..SPACE_SIZE)
            .map(Action::from_index)
            .filter(|a| shifted.fitness(a).0 == 11.0)
            .collect();
        brute.sort();
        assert_eq!(brute, shifted_optima(&shifted));
        let old = optimal_set();
        assert!(brute.iter().all(|a| !old.contains(a)));
        // mapping the new optima through the permutation recovers the old set
        let mut mapped: Vec<Action> = brute.iter().map(|a| shifted.translate(a)).collect();
        mapped.sort();
        let mut old_sorted = old.clone();
        old_sorted.sort();
        assert_eq!(mapped, old_sorted);
    }

    #[test]
    fn censored_median_handles_infinities() {
        assert_eq!(censored_median(&[Some(1), Some(5), Some(3)]), Some(3.0));
        assert_eq!(censored_median(&[Some(1), None, None]), None);
        assert_eq!(censored_median(&[Some(2), Some(4), None, Some(1)]), Some(3.0));
    }
}
