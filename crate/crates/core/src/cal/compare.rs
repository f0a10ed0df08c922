use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::problem::{Encoding, Problem, ProblemKind};
use super::trace::{Optimizer, Trace};
use super::CalError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
const CHECKPOINTS: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub optimizer: Optimizer,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Median over all runs, with failures ranked last; `None` when the
    /// median run failed.
    pub median_evaluations_to_target: Option<f64>,
    pub median_final_best: f64,
    /// `[evaluation, median best-so-far]` at evenly spaced checkpoints.
    pub curve: Vec<[f64; 2]>,
    /// Every run failed, never changed representation, and the best value
    /// reachable in its representation is above the target.
    pub representation_bound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Cal,
    Ga,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub problem: String,
    pub budget: u64,
    pub target: f64,
    pub seeds: Vec<u64>,
    /// Best value reachable without restructuring, when it can be enumerated.
    pub default_representation_optimum: Option<f64>,
    pub cal: OptimizerSummary,
    pub ga: OptimizerSummary,
    pub dominant: Verdict,
    pub statement: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn summarize(optimizer: Optimizer, traces: &[Trace], budget: u64, floor: Option<f64>, target: f64) -> OptimizerSummary {
    let successes = traces.iter().filter(|t| t.succeeded()).count();
    let to_target = median(
        traces
            .iter()
            .map(|t| t.evaluations_to_target().map_or(f64::INFINITY, |e| e as f64))
            .collect(),
    );
    let curve = (1..=CHECKPOINTS)
        .map(|c| {
            let at = (budget * c / CHECKPOINTS).max(1);
            let vals = traces
                .iter()
                .filter_map(|t| t.best_so_far.get((at.min(t.evaluations()) as usize).saturating_sub(1)).copied())
                .collect::<Vec<_>>();
            [at as f64, if vals.is_empty() { f64::NAN } else { median(vals) }]
        })
        .collect();
    OptimizerSummary {
        optimizer,
        runs: traces.len(),
        successes,
        success_rate: successes as f64 / traces.len() as f64,
        median_evaluations_to_target: to_target.is_finite().then_some(to_target),
        median_final_best: median(traces.iter().map(|t| t.final_best().unwrap_or(f64::INFINITY)).collect()),
        curve,
        representation_bound: successes == 0
            && traces.iter().all(|t| t.restructures == 0)
            && floor.is_some_and(|f| f > target),
    }
}

/// Lower is better throughout: success rate first, then median
/// evaluations-to-target, then median final best.
fn verdict(cal: &OptimizerSummary, ga: &OptimizerSummary) -> Verdict {
    let key = |s: &OptimizerSummary| {
        (
            -s.success_rate,
            s.median_evaluations_to_target.unwrap_or(f64::INFINITY),
            s.median_final_best,
        )
    };
    let (a, b) = (key(cal), key(ga));
    match a.partial_cmp(&b) {
        Some(std::cmp::Ordering::Less) => Verdict::Cal,
        Some(std::cmp::Ordering::Greater) => Verdict::Ga,
        _ => Verdict::Tie,
    }
}

/// Compares matched CAL and GA runs on one problem.
pub fn compare(problem: &Problem, cal: &[Trace], ga: &[Trace]) -> Result<ComparisonReport, CalError> {
    if cal.is_empty() || ga.is_empty() {
        return Err(CalError::Comparison("both optimizers need at least one trace".into()));
    }
    for t in cal.iter().chain(ga) {
        if t.budget != problem.budget {
            return Err(CalError::Comparison(format!(
                "trace {}/{} has budget {}, expected {}",
                t.problem, t.seed, t.budget, problem.budget
            )));
        }
        if t.problem != problem.name {
            return Err(CalError::Comparison(format!("trace for `{}` in a `{}` comparison", t.problem, problem.name)));
        }
    }
    let seeds = |ts: &[Trace]| {
        let mut s: Vec<u64> = ts.iter().map(|t| t.seed).collect();
        s.sort_unstable();
        s
    };
    if seeds(cal) != seeds(ga) {
        return Err(CalError::Comparison("seed sets differ".into()));
    }
    let floor = match &problem.kind {
        ProblemKind::Recycling(t) => t.exhaustive_optimum(Encoding::Role).ok().map(|v| v as f64),
        ProblemKind::Continuous { .. } => None,
    };
    let c = summarize(Optimizer::Cal, cal, problem.budget, floor, problem.target);
    let g = summarize(Optimizer::Ga, ga, problem.budget, floor, problem.target);
    let dominant = verdict(&c, &g);
    let mut statement = match dominant {
        Verdict::Cal => format!("CAL dominated GA on {}", problem.name),
        Verdict::Ga => format!("GA dominated CAL on {}", problem.name),
        Verdict::Tie => format!("CAL and GA tied on {}", problem.name),
    };
    for s in [&c, &g] {
        if s.representation_bound {
            let _ = write!(
                statement,
                "; {} failed because its representation cannot reach the target (best reachable {})",
                s.optimizer,
                floor.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(ComparisonReport {
        schema_version: REPORT_SCHEMA_VERSION,
        problem: problem.name.clone(),
        budget: problem.budget,
        target: problem.target,
        seeds: seeds(cal),
        default_representation_optimum: floor,
        cal: c,
        ga: g,
        dominant,
        statement,
    })
}

impl ComparisonReport {
    /// Tab-separated summary with a header row.
    pub fn table(&self) -> String {
        let mut out = String::from("problem\toptimizer\truns\tsuccess_rate\tmedian_evals_to_target\tmedian_final_best\n");
        for s in [&self.cal, &self.ga] {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:e}",
                self.problem,
                s.optimizer,
                s.runs,
                s.success_rate,
                s.median_evaluations_to_target.map_or("-".to_string(), |v| v.to_string()),
                s.median_final_best
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![1.0, f64::INFINITY, f64::INFINITY]).is_infinite());
    }
}
