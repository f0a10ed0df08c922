use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CalError;

pub const RECYCLING_SCHEMA_VERSION: u32 = 1;

/// `Σᵢ 100(xᵢ₊₁ − xᵢ²)² + (1 − xᵢ)²`.
pub fn rosenbrock(x: &[f64]) -> Result<f64, CalError> {
    if x.len() < 2 {
        return Err(CalError::Domain(format!(
            "rosenbrock needs dimension >= 2, got {}",
            x.len()
        )));
    }
    Ok(x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemSpec {
    pub name: String,
    pub role: String,
    pub attributes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    pub name: String,
    pub role: String,
    pub requires: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactSpec {
    pub name: String,
    pub slots: Vec<SlotSpec>,
}

/// Items with their default roles, and the artifacts to build from them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecyclingSpec {
    pub schema_version: u32,
    pub name: String,
    pub items: Vec<ItemSpec>,
    pub targets: Vec<ArtifactSpec>,
}

impl RecyclingSpec {
    pub fn from_json(text: &str) -> Result<Self, CalError> {
        let spec: RecyclingSpec = serde_json::from_str(text).map_err(|e| CalError::Spec(e.to_string()))?;
        if spec.schema_version != RECYCLING_SCHEMA_VERSION {
            return Err(CalError::Spec(format!(
                "schema_version {} is not supported (expected {RECYCLING_SCHEMA_VERSION})",
                spec.schema_version
            )));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CalError> {
        let text = std::fs::read_to_string(path).map_err(|e| CalError::Spec(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The tire, rope and frame swing task.
    pub fn fixture() -> Self {
        Self::from_json(include_str!("../../fixtures/recycling.json")).expect("shipped recycling fixture is valid")
    }
}

/// How items are matched to slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Items fill only slots carrying their role label.
    Role,
    /// Any item may fill any slot; only attributes count.
    Attribute,
}

/// Items assigned to the slots of every target artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecyclingTask {
    spec: RecyclingSpec,
    slots: Vec<SlotSpec>,
}

pub const RECYCLING_ENCODINGS: [Encoding; 2] = [Encoding::Role, Encoding::Attribute];

impl RecyclingTask {
    /// Rejects specs whose slots cannot all be satisfied under any encoding.
    pub fn new(spec: RecyclingSpec) -> Result<Self, CalError> {
        let mut names = BTreeSet::new();
        for item in &spec.items {
            if !names.insert(&item.name) {
                return Err(CalError::Spec(format!("duplicate item `{}`", item.name)));
            }
        }
        let slots: Vec<SlotSpec> = spec.targets.iter().flat_map(|t| t.slots.iter().cloned()).collect();
        let task = RecyclingTask { spec, slots };
        if !RECYCLING_ENCODINGS.iter().any(|&e| task.perfect_matching(e)) {
            return Err(CalError::Infeasible(task.spec.name.clone()));
        }
        Ok(task)
    }

    pub fn spec(&self) -> &RecyclingSpec {
        &self.spec
    }

    pub fn slots(&self) -> &[SlotSpec] {
        &self.slots
    }

    pub fn items(&self) -> &[ItemSpec] {
        &self.spec.items
    }

    pub fn allowed(&self, slot: usize, encoding: Encoding, item: usize) -> bool {
        match encoding {
            Encoding::Role => self.spec.items[item].role == self.slots[slot].role,
            Encoding::Attribute => true,
        }
    }

    /// Fillers for a slot under an encoding, with `None` for leaving it empty.
    pub fn choices(&self, slot: usize, encoding: Encoding) -> Vec<Option<usize>> {
        std::iter::once(None)
            .chain((0..self.spec.items.len()).filter(|&i| self.allowed(slot, encoding, i)).map(Some))
            .collect()
    }

    /// Unsatisfied requirements. An empty slot, a slot whose item is not
    /// allowed under `encoding`, or a slot reusing an item already placed in
    /// an earlier slot counts every requirement as unsatisfied.
    pub fn unsatisfied(&self, assignment: &[Option<usize>], encoding: Encoding) -> u64 {
        let mut used = BTreeSet::new();
        let mut missing = 0;
        for (s, (slot, fill)) in self.slots.iter().zip(assignment).enumerate() {
            match fill {
                Some(i) if self.allowed(s, encoding, *i) && used.insert(*i) => {
                    missing += slot.requires.difference(&self.spec.items[*i].attributes).count() as u64;
                }
                _ => missing += slot.requires.len() as u64,
            }
        }
        missing
    }

    /// Drops fillers that `encoding` does not allow.
    pub fn reencode(&self, assignment: &[Option<usize>], encoding: Encoding) -> Vec<Option<usize>> {
        assignment
            .iter()
            .enumerate()
            .map(|(s, f)| f.filter(|&i| self.allowed(s, encoding, i)))
            .collect()
    }

    pub fn encoding_space(&self, encoding: Encoding) -> u128 {
        (0..self.slots.len())
            .map(|s| self.choices(s, encoding).len() as u128)
            .product()
    }

    /// Minimum of [`Self::unsatisfied`] over every assignment valid under
    /// `encoding`, by exhaustive enumeration.
    pub fn exhaustive_optimum(&self, encoding: Encoding) -> Result<u64, CalError> {
        const LIMIT: u128 = 50_000_000;
        let space = self.encoding_space(encoding);
        if space > LIMIT {
            return Err(CalError::Domain(format!("{space} assignments exceed the enumeration limit {LIMIT}")));
        }
        let choices: Vec<_> = (0..self.slots.len()).map(|s| self.choices(s, encoding)).collect();
        let mut idx = vec![0usize; choices.len()];
        let mut assignment: Vec<Option<usize>> = choices.iter().map(|c| c[0]).collect();
        let mut best = self.unsatisfied(&assignment, encoding);
        'outer: loop {
            for s in 0..idx.len() {
                idx[s] += 1;
                if idx[s] < choices[s].len() {
                    assignment[s] = choices[s][idx[s]];
                    best = best.min(self.unsatisfied(&assignment, encoding));
                    continue 'outer;
                }
                idx[s] = 0;
                assignment[s] = choices[s][0];
            }
            break;
        }
        Ok(best)
    }

    fn perfect_matching(&self, encoding: Encoding) -> bool {
        let covers = |s: usize, i: usize| {
            self.allowed(s, encoding, i) && self.slots[s].requires.is_subset(&self.spec.items[i].attributes)
        };
        let mut owner: Vec<Option<usize>> = vec![None; self.spec.items.len()];
        fn augment(
            s: usize,
            seen: &mut [bool],
            owner: &mut [Option<usize>],
            covers: &dyn Fn(usize, usize) -> bool,
        ) -> bool {
            for i in 0..owner.len() {
                if covers(s, i) && !seen[i] {
                    seen[i] = true;
                    if owner[i].is_none_or(|t| augment(t, seen, owner, covers)) {
                        owner[i] = Some(s);
                        return true;
                    }
                }
            }
            false
        }
        (0..self.slots.len()).all(|s| {
            let mut seen = vec![false; self.spec.items.len()];
            augment(s, &mut seen, &mut owner, &covers)
        })
    }
}

/// A candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Genome {
    Real(Vec<f64>),
    Assign(Vec<Option<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    /// Rosenbrock in `dimension` coordinates, initialised in `[lower, upper]`.
    Continuous { dimension: usize, lower: f64, upper: f64 },
    Recycling(RecyclingTask),
}

/// An objective with an evaluation budget. Every call to [`Problem::evaluate`]
/// increments an instrumented counter.
#[derive(Debug)]
pub struct Problem {
    pub name: String,
    pub kind: ProblemKind,
    pub budget: u64,
    /// Success level for evaluations-to-target.
    pub target: f64,
    calls: AtomicU64,
}

impl Clone for Problem {
    fn clone(&self) -> Self {
        Problem::new(self.name.clone(), self.kind.clone(), self.budget, self.target)
    }
}

impl Problem {
    pub fn new(name: impl Into<String>, kind: ProblemKind, budget: u64, target: f64) -> Self {
        Problem {
            name: name.into(),
            kind,
            budget,
            target,
            calls: AtomicU64::new(0),
        }
    }

    pub fn rosenbrock(dimension: usize, budget: u64) -> Result<Self, CalError> {
        if dimension < 2 {
            return Err(CalError::Domain(format!("rosenbrock needs dimension >= 2, got {dimension}")));
        }
        Ok(Problem::new(
            format!("rosenbrock-{dimension}d"),
            ProblemKind::Continuous {
                dimension,
                lower: -2.048,
                upper: 2.048,
            },
            budget,
            1e-3,
        ))
    }

    pub fn recycling(spec: RecyclingSpec, budget: u64) -> Result<Self, CalError> {
        let name = format!("recycling-{}", spec.name);
        Ok(Problem::new(name, ProblemKind::Recycling(RecyclingTask::new(spec)?), budget, 0.0))
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Coordinates an optimizer can vary.
    pub fn coords(&self) -> usize {
        match &self.kind {
            ProblemKind::Continuous { dimension, .. } => *dimension,
            ProblemKind::Recycling(t) => t.slots().len(),
        }
    }

    /// Size of the representation library.
    pub fn encodings(&self) -> usize {
        2
    }

    pub fn evaluate(&self, g: &Genome, encoding: usize) -> Result<f64, CalError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.objective(g, encoding)
    }

    /// The objective without counting the call.
    pub fn objective(&self, g: &Genome, encoding: usize) -> Result<f64, CalError> {
        match (&self.kind, g) {
            (ProblemKind::Continuous { .. }, Genome::Real(x)) => rosenbrock(x),
            (ProblemKind::Recycling(t), Genome::Assign(a)) if a.len() == t.slots().len() => {
                Ok(t.unsatisfied(a, RECYCLING_ENCODINGS[encoding]) as f64)
            }
            _ => Err(CalError::Domain(format!("genome does not fit {}", self.name))),
        }
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R, encoding: usize) -> Genome {
        match &self.kind {
            ProblemKind::Continuous { dimension, lower, upper } => {
                Genome::Real((0..*dimension).map(|_| rng.random_range(*lower..=*upper)).collect())
            }
            ProblemKind::Recycling(t) => Genome::Assign(
                (0..t.slots().len())
                    .map(|s| *t.choices(s, RECYCLING_ENCODINGS[encoding]).choose(rng).expect("None is a choice"))
                    .collect(),
            ),
        }
    }

    /// Re-expresses a genome for another representation without changing
    /// what it means where both representations allow it.
    pub fn reencode(&self, g: &Genome, encoding: usize) -> Genome {
        match (&self.kind, g) {
            (ProblemKind::Recycling(t), Genome::Assign(a)) => Genome::Assign(t.reencode(a, RECYCLING_ENCODINGS[encoding])),
            _ => g.clone(),
        }
    }
}
