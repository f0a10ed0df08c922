//! Recursive recall: chaining single-step gestures into multi-step actions.
//!
//! A [`Chain`] is scored additively, with a step that repeats its
//! predecessor contributing nothing. With no length cap the score is
//! unbounded, so populations keep finding fitter chains long after the
//! single-step optimum has been reached.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gesture::{Action, Fitness, Landscape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("a chain needs at least one step")]
    Empty,
    #[error("top-set flux needs at least two snapshots, got {0}")]
    InsufficientSnapshots(usize),
}

/// An ordered, non-empty sequence of gestures.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Action>", into = "Vec<Action>")]
pub struct Chain(Vec<Action>);

impl Chain {
    pub fn new(steps: Vec<Action>) -> Result<Self, ChainError> {
        if steps.is_empty() {
            return Err(ChainError::Empty);
        }
        Ok(Chain(steps))
    }

    pub fn single(a: Action) -> Self {
        Chain(vec![a])
    }

    pub fn steps(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &Action {
        &self.0[0]
    }

    pub fn last(&self) -> &Action {
        self.0.last().expect("chains are non-empty")
    }

    pub fn push(&mut self, a: Action) {
        self.0.push(a);
    }

    pub fn set(&mut self, index: usize, a: Action) {
        self.0[index] = a;
    }
}

impl TryFrom<Vec<Action>> for Chain {
    type Error = ChainError;
    fn try_from(v: Vec<Action>) -> Result<Self, Self::Error> {
        Chain::new(v)
    }
}

impl From<Chain> for Vec<Action> {
    fn from(c: Chain) -> Self {
        c.0
    }
}

/// Additive chain score under a landscape; consecutive duplicates count zero.
pub fn chain_fitness_in(c: &Chain, landscape: &Landscape) -> Fitness {
    let steps = c.steps();
    let mut total = landscape.fitness(&steps[0]).0;
    for w in steps.windows(2) {
        if w[1] != w[0] {
            total += landscape.fitness(&w[1]).0;
        }
    }
    Fitness(total)
}

/// Additive chain score under the base landscape.
pub fn chain_fitness(c: &Chain) -> Fitness {
    chain_fitness_in(c, &Landscape::default())
}

/// Scores a raw step list, rejecting the empty list.
pub fn steps_fitness(steps: &[Action]) -> Result<Fitness, ChainError> {
    let chain = Chain::new(steps.to_vec())?;
    Ok(chain_fitness(&chain))
}

/// Parameters of recall-driven invention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecallConfig {
    pub enabled: bool,
    pub p_extend: f64,
    /// Maximum chain length; 0 means unbounded.
    pub l_max: usize,
    pub top_k: usize,
    pub checkpoint_interval: u64,
}

impl Default for RecallConfig {
    fn default() -> Self {
        RecallConfig {
            enabled: false,
            p_extend: 0.1,
            l_max: 0,
            top_k: 5,
            checkpoint_interval: 50,
        }
    }
}

impl RecallConfig {
    pub fn can_grow(&self, len: usize) -> bool {
        self.enabled && (self.l_max == 0 || len < self.l_max)
    }
}

/// Recall-driven invention on a chain.
///
/// With probability `p_extend` (and room to grow) a mutated copy of the last
/// step is appended; otherwise one uniformly chosen step is mutated in place.
/// `mutate` is the single-step invention operator.
pub fn extend_or_mutate<R, F>(chain: &Chain, cfg: &RecallConfig, rng: &mut R, mut mutate: F) -> Chain
where
    R: Rng + ?Sized,
    F: FnMut(&Action, &mut R) -> Action,
{
    let mut out = chain.clone();
    if cfg.can_grow(chain.len()) && rng.random_bool(cfg.p_extend) {
        let next = mutate(chain.last(), rng);
        out.push(next);
    } else {
        let k = rng.random_range(0..chain.len());
        let next = mutate(&chain.steps()[k], rng);
        out.set(k, next);
    }
    out
}

/// Jaccard distance between two sets; two empty sets are at distance 0.
pub fn jaccard_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    1.0 - inter as f64 / union as f64
}

/// Mean Jaccard distance between consecutive top-k snapshots.
pub fn top_set_flux<T: Ord>(snapshots: &[BTreeSet<T>]) -> Result<f64, ChainError> {
    if snapshots.len() < 2 {
        return Err(ChainError::InsufficientSnapshots(snapshots.len()));
    }
    let total: f64 = snapshots
        .windows(2)
        .map(|w| jaccard_distance(&w[0], &w[1]))
        .sum();
    Ok(total / (snapshots.len() - 1) as f64)
}

/// The `k` fittest distinct chains, ties broken by chain order.
pub fn top_k<'a, I>(chains: I, k: usize, landscape: &Landscape) -> BTreeSet<Chain>
where
    I: IntoIterator<Item = &'a Chain>,
{
    let distinct: BTreeSet<&Chain> = chains.into_iter().collect();
    let mut scored: Vec<(f64, &Chain)> = distinct
        .into_iter()
        .map(|c| (chain_fitness_in(c, landscape).0, c))
        .collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
    scored.into_iter().take(k).map(|(_, c)| c.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::optimal_set;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_scores() {
        assert_eq!(chain_fitness(&Chain::single(Action::REST)), Fitness(1.0));
        let opt = optimal_set();
        let dup = Chain::new(vec![opt[0], opt[0]]).unwrap();
        assert_eq!(chain_fitness(&dup), Fitness(11.0));
        let two = Chain::new(vec![opt[0], opt[1]]).unwrap();
        assert_eq!(chain_fitness(&two), Fitness(22.0));
        // a repeat only counts zero when adjacent
        let aba = Chain::new(vec![opt[0], opt[1], opt[0]]).unwrap();
        assert_eq!(chain_fitness(&aba), Fitness(33.0));
    }

    #[test]
    fn empty_chain_rejected() {
        assert_eq!(Chain::new(vec![]), Err(ChainError::Empty));
        assert_eq!(steps_fitness(&[]), Err(ChainError::Empty));
        assert!(serde_json::from_str::<Chain>("[]").is_err());
    }

    #[test]
    fn no_extension_without_probability() {
        let cfg = RecallConfig { enabled: true, p_extend: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = Chain::single(Action::REST);
        for _ in 0..200 {
            c = extend_or_mutate(&c, &cfg, &mut rng, |a, _| a.with(0, 1));
            assert_eq!(c.len(), 1);
        }
    }

    #[test]
    fn identity_extension_keeps_fitness() {
        let cfg = RecallConfig { enabled: true, p_extend: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Chain::single(optimal_set()[2]);
        let next = extend_or_mutate(&c, &cfg, &mut rng, |a, _| *a);
        assert_eq!(next.len(), 2);
        assert_eq!(chain_fitness(&next), chain_fitness(&c));
    }

    #[test]
    fn length_cap_respected() {
        let cfg = RecallConfig { enabled: true, p_extend: 1.0, l_max: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = Chain::single(Action::REST);
        for _ in 0..20 {
            c = extend_or_mutate(&c, &cfg, &mut rng, |a, _| *a);
        }
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn flux_bounds() {
        let a: BTreeSet<u8> = [1, 2, 3].into();
        let b: BTreeSet<u8> = [4, 5].into();
        assert_eq!(top_set_flux(&[a.clone(), a.clone(), a.clone()]).unwrap(), 0.0);
        assert_eq!(top_set_flux(&[a.clone(), b.clone()]).unwrap(), 1.0);
        assert_eq!(top_set_flux(&[a]), Err(ChainError::InsufficientSnapshots(1)));
        let c: BTreeSet<u8> = [1, 2].into();
        let d: BTreeSet<u8> = [2, 3].into();
        assert!((jaccard_distance(&c, &d) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn top_k_orders_by_fitness() {
        let opt = optimal_set();
        let chains = vec![
            Chain::single(Action::REST),
            Chain::single(opt[0]),
            Chain::new(vec![opt[0], opt[1]]).unwrap(),
            Chain::single(opt[0]),
        ];
        let top = top_k(chains.iter(), 2, &Landscape::default());
        assert_eq!(top.len(), 2);
        assert!(top.contains(&chains[2]));
        assert!(top.contains(&chains[1]));
    }
}
