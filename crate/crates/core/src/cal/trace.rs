use serde::{Deserialize, Serialize};

use super::problem::{Genome, Problem};
use super::CalError;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Cal,
    Ga,
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Cal => "CAL",
            Optimizer::Ga => "GA",
        })
    }
}

/// The record of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub schema_version: u32,
    pub optimizer: Optimizer,
    pub problem: String,
    pub seed: u64,
    pub budget: u64,
    pub target: f64,
    /// Best objective seen after each evaluation.
    pub best_so_far: Vec<f64>,
    /// Candidates generated in each iteration or generation.
    pub candidates: Vec<usize>,
    /// Smallest and largest agent step scale after each iteration.
    pub sigma_range: Vec<[f64; 2]>,
    /// Representation switches over the run.
    pub restructures: u64,
    pub best: Option<Genome>,
}

impl Trace {
    pub fn new(optimizer: Optimizer, problem: &Problem, seed: u64) -> Self {
        Trace {
            schema_version: TRACE_SCHEMA_VERSION,
            optimizer,
            problem: problem.name.clone(),
            seed,
            budget: problem.budget,
            target: problem.target,
            best_so_far: Vec::new(),
            candidates: Vec::new(),
            sigma_range: Vec::new(),
            restructures: 0,
            best: None,
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.best_so_far.len() as u64
    }

    pub fn final_best(&self) -> Option<f64> {
        self.best_so_far.last().copied()
    }

    /// One-based index of the first evaluation at or below the target.
    pub fn evaluations_to_target(&self) -> Option<u64> {
        self.best_so_far.iter().position(|&b| b <= self.target).map(|i| i as u64 + 1)
    }

    pub fn succeeded(&self) -> bool {
        self.evaluations_to_target().is_some()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("traces serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self, CalError> {
        let t: Trace = serde_json::from_str(line).map_err(|e| CalError::Spec(e.to_string()))?;
        if t.schema_version != TRACE_SCHEMA_VERSION {
            return Err(CalError::Spec(format!("trace schema_version {} is not supported", t.schema_version)));
        }
        Ok(t)
    }
}

/// Evaluates through the problem's counter and stops at the budget.
pub(crate) struct Budgeted<'a> {
    pub problem: &'a Problem,
    pub trace: Trace,
}

impl<'a> Budgeted<'a> {
    pub fn new(optimizer: Optimizer, problem: &'a Problem, seed: u64) -> Self {
        Budgeted {
            problem,
            trace: Trace::new(optimizer, problem, seed),
        }
    }

    pub fn exhausted(&self) -> bool {
        self.trace.evaluations() >= self.problem.budget
    }

    /// `None` once the budget is spent.
    pub fn eval(&mut self, g: &Genome, encoding: usize) -> Result<Option<f64>, CalError> {
        if self.exhausted() {
            return Ok(None);
        }
        let f = self.problem.evaluate(g, encoding)?;
        match self.trace.final_best() {
            Some(b) if b <= f => self.trace.best_so_far.push(b),
            _ => {
                self.trace.best_so_far.push(f);
                self.trace.best = Some(g.clone());
            }
        }
        Ok(Some(f))
    }
}
