//! The gesture action space.
//!
//! An [`Action`] assigns one of three positions to each of six body parts.
//! The space has 3⁶ = 729 members, which is small enough to enumerate
//! outright, so every claim about optima can be checked against
//! [`enumerate_action_space`].
//!
//! The fitness functional rewards moving parts, an upright head, a settled
//! hip, and anti-symmetric arm and leg pairs. Hip movement scores nothing, so
//! the optimal set is exactly the four actions with the head up, the hips
//! neutral, and each limb pair mirrored.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of body parts in an action.
pub const PARTS: usize = 6;
/// Number of actions in the whole space.
pub const SPACE_SIZE: usize = 729;
/// Best single-step fitness.
pub const OPTIMUM: f64 = 11.0;

pub const HEAD: usize = 0;
pub const LEFT_ARM: usize = 1;
pub const RIGHT_ARM: usize = 2;
pub const LEFT_LEG: usize = 3;
pub const RIGHT_LEG: usize = 4;
pub const HIPS: usize = 5;

/// The three values a body part can take, in canonical index order.
pub const POSITIONS: [i8; 3] = [-1, 0, 1];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GestureError {
    #[error("an action has exactly {PARTS} parts, got {0}")]
    Arity(usize),
    #[error("part {index} has position {value}, expected one of -1, 0, +1")]
    Position { index: usize, value: i64 },
}

/// Index of a position value in [`POSITIONS`].
#[inline]
pub fn position_index(value: i8) -> usize {
    (value + 1) as usize
}

/// A six-part ternary gesture.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct Action([i8; PARTS]);

impl Action {
    /// The all-neutral action every agent starts from.
    pub const REST: Action = Action([0; PARTS]);

    pub fn new(positions: [i8; PARTS]) -> Result<Self, GestureError> {
        Self::from_slice(&positions.map(i64::from))
    }

    pub fn from_slice(positions: &[i64]) -> Result<Self, GestureError> {
        if positions.len() != PARTS {
            return Err(GestureError::Arity(positions.len()));
        }
        let mut parts = [0i8; PARTS];
        for (index, &value) in positions.iter().enumerate() {
            if !(-1..=1).contains(&value) {
                return Err(GestureError::Position { index, value });
            }
            parts[index] = value as i8;
        }
        Ok(Action(parts))
    }

    /// Decodes the `n`-th action in base-3 order (`n < 729`).
    pub fn from_index(mut n: usize) -> Self {
        debug_assert!(n < SPACE_SIZE);
        let mut parts = [0i8; PARTS];
        for part in parts.iter_mut() {
            *part = POSITIONS[n % 3];
            n /= 3;
        }
        Action(parts)
    }

    pub fn positions(&self) -> &[i8; PARTS] {
        &self.0
    }

    pub fn get(&self, part: usize) -> i8 {
        self.0[part]
    }

    pub fn with(mut self, part: usize, value: i8) -> Self {
        debug_assert!((-1..=1).contains(&value));
        self.0[part] = value;
        self
    }

    /// The left/right mirror image: arms swapped, legs swapped.
    pub fn mirrored(&self) -> Self {
        let mut p = self.0;
        p.swap(LEFT_ARM, RIGHT_ARM);
        p.swap(LEFT_LEG, RIGHT_LEG);
        Action(p)
    }
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Action{self}")
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match p {
                1 => f.write_str("+1")?,
                v => write!(f, "{v}")?,
            }
        }
        f.write_str(")")
    }
}

impl TryFrom<Vec<i64>> for Action {
    type Error = GestureError;
    fn try_from(v: Vec<i64>) -> Result<Self, Self::Error> {
        Action::from_slice(&v)
    }
}

impl From<Action> for Vec<i64> {
    fn from(a: Action) -> Self {
        a.0.iter().map(|&p| i64::from(p)).collect()
    }
}

/// A non-negative, dimensionless score.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fitness(pub f64);

impl Fitness {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn mirrored_pair(a: i8, b: i8) -> bool {
    a != 0 && a == -b
}

/// Fitness of a single gesture.
///
/// One point per moving head, arm or leg; +2 per anti-symmetric limb pair;
/// +1 for the head up; +1 for neutral hips.
pub fn action_fitness(a: &Action) -> Fitness {
    let p = a.positions();
    let moves = p[..HIPS].iter().filter(|&&v| v != 0).count() as f64;
    let mut bonus = 0.0;
    if mirrored_pair(p[LEFT_ARM], p[RIGHT_ARM]) {
        bonus += 2.0;
    }
    if mirrored_pair(p[LEFT_LEG], p[RIGHT_LEG]) {
        bonus += 2.0;
    }
    if p[HEAD] == 1 {
        bonus += 1.0;
    }
    if p[HIPS] == 0 {
        bonus += 1.0;
    }
    Fitness(moves + bonus)
}

/// Hamming distance between two gestures.
pub fn action_distance(a: &Action, b: &Action) -> usize {
    a.0.iter().zip(b.0.iter()).filter(|(x, y)| x != y).count()
}

/// Every action with its fitness, fittest first (ties in base-3 order).
pub fn enumerate_action_space() -> Vec<(Action, Fitness)> {
    let mut all: Vec<_> = (0..SPACE_SIZE)
        .map(Action::from_index)
        .map(|a| (a, action_fitness(&a)))
        .collect();
    all.sort_by(|x, y| y.1 .0.total_cmp(&x.1 .0));
    all
}

/// The actions attaining [`OPTIMUM`].
pub fn optimal_set() -> Vec<Action> {
    enumerate_action_space()
        .into_iter()
        .take_while(|(_, f)| f.0 == OPTIMUM)
        .map(|(a, _)| a)
        .collect()
}

/// A fitness landscape: the base functional composed with a per-part
/// permutation of position values.
///
/// `map[part][position_index(v)]` is the value the base functional sees when
/// the part holds `v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landscape {
    map: [[i8; 3]; PARTS],
}

impl Default for Landscape {
    fn default() -> Self {
        Landscape {
            map: [POSITIONS; PARTS],
        }
    }
}

impl Landscape {
    pub fn from_permutations(map: [[i8; 3]; PARTS]) -> Self {
        for row in &map {
            let mut seen = [false; 3];
            for &v in row {
                seen[position_index(v)] = true;
            }
            assert!(seen.iter().all(|&s| s), "landscape row {row:?} is not a permutation");
        }
        Landscape { map }
    }

    pub fn is_identity(&self) -> bool {
        *self == Landscape::default()
    }

    /// Applies the value permutation to an action.
    pub fn translate(&self, a: &Action) -> Action {
        let mut out = [0i8; PARTS];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.map[i][position_index(a.get(i))];
        }
        Action(out)
    }

    /// Inverse translation: the action that `translate` maps onto `a`.
    pub fn preimage(&self, a: &Action) -> Action {
        let mut out = [0i8; PARTS];
        for (i, slot) in out.iter_mut().enumerate() {
            let k = self.map[i]
                .iter()
                .position(|&v| v == a.get(i))
                .expect("permutation row covers every value");
            *slot = POSITIONS[k];
        }
        Action(out)
    }

    /// This landscape followed by one more permutation layer.
    pub fn then(&self, next: &Landscape) -> Landscape {
        let mut map = [[0i8; 3]; PARTS];
        for (i, row) in map.iter_mut().enumerate() {
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = next.map[i][position_index(self.map[i][k])];
            }
        }
        Landscape { map }
    }

    pub fn fitness(&self, a: &Action) -> Fitness {
        action_fitness(&self.translate(a))
    }

    /// Actions optimal under this landscape.
    pub fn optimal_set(&self) -> Vec<Action> {
        optimal_set().iter().map(|a| self.preimage(a)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(p: [i8; 6]) -> Action {
        Action::new(p).unwrap()
    }

    #[test]
    fn rest_scores_hips_bonus_only() {
        assert_eq!(action_fitness(&Action::REST), Fitness(1.0));
    }

    #[test]
    fn all_raised() {
        assert_eq!(action_fitness(&act([1; 6])), Fitness(6.0));
    }

    #[test]
    fn known_maximizer() {
        assert_eq!(action_fitness(&act([1, 1, -1, 1, -1, 0])), Fitness(11.0));
    }

    #[test]
    fn validation_errors() {
        assert_eq!(Action::from_slice(&[0, 0, 0]), Err(GestureError::Arity(3)));
        assert_eq!(
            Action::from_slice(&[0, 0, 2, 0, 0, 0]),
            Err(GestureError::Position { index: 2, value: 2 })
        );
        assert!(serde_json::from_str::<Action>("[0,0,0,0,0,-2]").is_err());
    }

    #[test]
    fn distances() {
        let a = act([1, 0, -1, 0, 1, 0]);
        assert_eq!(action_distance(&a, &a), 0);
        assert_eq!(action_distance(&Action::REST, &act([1; 6])), 6);
        assert_eq!(
            action_distance(&act([1, 0, 0, 0, 0, 0]), &act([-1, 0, 0, 0, 0, 0])),
            1
        );
    }

    #[test]
    fn enumeration_oracle() {
        let all = enumerate_action_space();
        assert_eq!(all.len(), SPACE_SIZE);
        assert_eq!(all[0].1, Fitness(OPTIMUM));
        let optima = optimal_set();
        assert_eq!(optima.len(), 4);
        for a in &optima {
            assert_eq!(a.get(HEAD), 1);
            assert_eq!(a.get(HIPS), 0);
            assert_eq!(a.get(LEFT_ARM), -a.get(RIGHT_ARM));
            assert_eq!(a.get(LEFT_LEG), -a.get(RIGHT_LEG));
        }
        // sorted descending
        assert!(all.windows(2).all(|w| w[0].1 .0 >= w[1].1 .0));
    }

    #[test]
    fn mirror_symmetry_over_whole_space() {
        for n in 0..SPACE_SIZE {
            let a = Action::from_index(n);
            assert_eq!(action_fitness(&a), action_fitness(&a.mirrored()), "{a}");
        }
    }

    #[test]
    fn landscape_identity_and_inverse() {
        let id = Landscape::default();
        assert!(id.is_identity());
        let l = Landscape::from_permutations([[0, 1, -1], [1, -1, 0], POSITIONS, POSITIONS, [1, 0, -1], [-1, 1, 0]]);
        for n in 0..SPACE_SIZE {
            let a = Action::from_index(n);
            assert_eq!(id.fitness(&a), action_fitness(&a));
            assert_eq!(l.preimage(&l.translate(&a)), a);
        }
        let twice = l.then(&l);
        for n in 0..SPACE_SIZE {
            let a = Action::from_index(n);
            assert_eq!(twice.translate(&a), l.translate(&l.translate(&a)));
        }
    }
}
