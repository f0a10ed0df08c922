use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::Chain;
use crate::gesture::{position_index, Action, Fitness, PARTS, POSITIONS};

use super::config::Cell;

/// Learned value estimates `Q(part, position)`.
///
/// Each cell is the running mean of the fitness of every observed action
/// holding that position on that part. Unobserved cells stay at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct QTable {
    values: [[f64; 3]; PARTS],
    counts: [[u64; 3]; PARTS],
}

impl QTable {
    pub fn get(&self, part: usize, value: i8) -> f64 {
        self.values[part][position_index(value)]
    }

    pub fn count(&self, part: usize, value: i8) -> u64 {
        self.counts[part][position_index(value)]
    }

    pub fn row(&self, part: usize) -> [f64; 3] {
        self.values[part]
    }

    /// Overwrites one estimate, for scripted scenarios.
    pub fn set(&mut self, part: usize, value: i8, q: f64) {
        self.values[part][position_index(value)] = q;
    }

    /// Folds one observation in. With `memory > 0` the step size bottoms out
    /// at `1 / memory`.
    pub fn observe(&mut self, action: &Action, fitness: Fitness, memory: u64) {
        for (part, &v) in action.positions().iter().enumerate() {
            let k = position_index(v);
            let n = &mut self.counts[part][k];
            *n += 1;
            let denom = if memory > 0 { (*n).min(memory) } else { *n };
            let q = &mut self.values[part][k];
            *q += (fitness.0 - *q) / denom as f64;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|q| q.is_finite())
    }
}

/// How a mutated part picks its new position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InventMode {
    /// Uniform over the two other positions.
    Divergent,
    /// Softmax over all three positions by learned value.
    Associative,
}

/// Softmax weights `exp(beta * Q(part, v))` over the three positions.
pub fn associative_weights(q: &QTable, part: usize, beta: f64) -> [f64; 3] {
    let row = q.row(part);
    let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w = row.map(|x| (beta * (x - top)).exp());
    let s: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= s;
    }
    w
}

/// Single-step invention: each part mutates independently with
/// probability `alpha`.
pub fn invent_action<R: Rng + ?Sized>(
    current: &Action,
    q: &QTable,
    alpha: f64,
    mode: InventMode,
    beta: f64,
    rng: &mut R,
) -> Action {
    let mut out = *current;
    for part in 0..PARTS {
        if !rng.random_bool(alpha) {
            continue;
        }
        let v = match mode {
            InventMode::Divergent => {
                let old = current.get(part);
                let others: Vec<i8> = POSITIONS.iter().copied().filter(|&p| p != old).collect();
                others[rng.random_range(0..2)]
            }
            InventMode::Associative => {
                let w = associative_weights(q, part, beta);
                let u: f64 = rng.random();
                if u < w[0] {
                    POSITIONS[0]
                } else if u < w[0] + w[1] {
                    POSITIONS[1]
                } else {
                    POSITIONS[2]
                }
            }
        };
        out = out.with(part, v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub cell: Cell,
    pub current: Chain,
    pub q: QTable,
    pub alpha: f64,
    /// Per-agent invention probability.
    pub p_create: f64,
    pub is_creator: bool,
    pub is_leader: bool,
}

impl Agent {
    /// Invents a variant of `from` using this agent's reactivity and values.
    pub fn invent<R: Rng + ?Sized>(&self, from: &Action, mode: InventMode, beta: f64, rng: &mut R) -> Action {
        invent_action(from, &self.q, self.alpha, mode, beta, rng)
    }

    /// Updates value estimates from observed `(action, fitness)` pairs.
    pub fn learn(&mut self, observed: &[(Action, Fitness)], memory: u64) {
        for (a, f) in observed {
            self.q.observe(a, *f, memory);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent() -> Agent {
        Agent {
            id: 0,
            cell: [0, 0],
            current: Chain::single(Action::REST),
            q: QTable::default(),
            alpha: 1.0 / 6.0,
            p_create: 1.0 / 6.0,
            is_creator: false,
            is_leader: false,
        }
    }

    #[test]
    fn zero_alpha_is_identity() {
        let mut a = agent();
        a.alpha = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let from = Action::new([1, 0, -1, 0, 1, 0]).unwrap();
        for mode in [InventMode::Divergent, InventMode::Associative] {
            for _ in 0..100 {
                assert_eq!(a.invent(&from, mode, 2.0, &mut rng), from);
            }
        }
    }

    #[test]
    fn full_divergent_changes_every_part() {
        let mut a = agent();
        a.alpha = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let from = Action::new([1, 0, -1, 0, 1, 0]).unwrap();
        let mut seen = [[false; 3]; PARTS];
        for _ in 0..500 {
            let next = a.invent(&from, InventMode::Divergent, 2.0, &mut rng);
            for i in 0..PARTS {
                assert_ne!(next.get(i), from.get(i));
                seen[i][position_index(next.get(i))] = true;
            }
        }
        // both alternatives show up on every part
        for i in 0..PARTS {
            assert_eq!(seen[i].iter().filter(|&&s| s).count(), 2);
        }
    }

    #[test]
    fn single_observation_mean() {
        let mut a = agent();
        a.learn(&[(Action::REST, Fitness(1.0))], 0);
        for i in 0..PARTS {
            assert_eq!(a.q.get(i, 0), 1.0);
            assert_eq!(a.q.get(i, 1), 0.0);
            assert_eq!(a.q.get(i, -1), 0.0);
        }
    }

    #[test]
    fn two_observation_mean() {
        let mut a = agent();
        let x = Action::new([0, 1, 1, 1, 1, 1]).unwrap();
        a.learn(&[(Action::REST, Fitness(1.0)), (x, Fitness(3.0))], 0);
        assert_eq!(a.q.get(0, 0), 2.0);
        assert_eq!(a.q.get(1, 0), 1.0);
        assert_eq!(a.q.get(1, 1), 3.0);
    }

    #[test]
    fn memory_caps_step_size() {
        let mut q = QTable::default();
        for _ in 0..100 {
            q.observe(&Action::REST, Fitness(10.0), 4);
        }
        q.observe(&Action::REST, Fitness(2.0), 4);
        // last step weighs 1/4
        assert!((q.get(0, 0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_weights_normalized() {
        let mut q = QTable::default();
        q.set(0, 1, 5.0);
        let w = associative_weights(&q, 0, 2.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let e = (10.0f64).exp();
        assert!((w[2] - e / (e + 2.0)).abs() < 1e-12);
    }
}
