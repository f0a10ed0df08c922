use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::concept::Concept;
use super::state::state_from_weights;
use super::ScopError;

const RANK_TOL: f64 = 1e-12;

/// Joint state of two concepts over the product of their bases.
///
/// The joint vector superposes two orthonormal paths: the product of the
/// concepts' own states, and a path weighted by shared properties. The
/// second path carries the phase `e^{iθ}`, so every joint probability has a
/// cross term `2 Re(ψ₁ ψ̄₂ e^{-iθ}) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedState {
    pub a: String,
    pub b: String,
    pub context: String,
    pub basis_a: Vec<String>,
    pub basis_b: Vec<String>,
    /// Row-major joint amplitudes, `basis_a.len() × basis_b.len()`.
    pub amplitudes: Vec<Complex64>,
    pub theta: f64,
    /// The product path, unit norm.
    pub product: Vec<f64>,
    /// The overlap path orthogonalized against the product path; all zero
    /// when the two coincide.
    pub overlap: Vec<f64>,
    /// The joint cell where the overlap path peaks.
    pub designated: (usize, usize),
    pub separable: bool,
}

impl CombinedState {
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.basis_b.len() + j
    }

    pub fn amplitude(&self, i: usize, j: usize) -> Complex64 {
        self.amplitudes[self.at(i, j)]
    }

    pub fn probability(&self, i: usize, j: usize) -> f64 {
        self.amplitude(i, j).norm_sqr()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// The phase-free mixture `(|ψ₁|² + |ψ₂|²) / 2`, or just `|ψ₁|²` when
    /// there is a single path.
    pub fn classical(&self) -> Vec<f64> {
        if self.overlap.iter().all(|&x| x == 0.0) {
            return self.product.iter().map(|x| x * x).collect();
        }
        self.product
            .iter()
            .zip(&self.overlap)
            .map(|(p, q)| 0.5 * (p * p + q * q))
            .collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// The combined label of the designated cell, e.g. `tire_swing`.
    pub fn designated_labels(&self) -> (&str, &str) {
        (&self.basis_a[self.designated.0], &self.basis_b[self.designated.1])
    }

    /// The modal joint cell.
    pub fn modal(&self) -> (usize, usize) {
        let mut best = 0;
        for k in 0..self.amplitudes.len() {
            if self.amplitudes[k].norm_sqr() > self.amplitudes[best].norm_sqr() {
                best = k;
            }
        }
        (best / self.basis_b.len(), best % self.basis_b.len())
    }
}

/// Whether any 2×2 minor of the joint matrix is nonzero.
fn has_rank_above_one(m: &[Complex64], rows: usize, cols: usize) -> bool {
    for i in 0..rows {
        for k in i + 1..rows {
            for j in 0..cols {
                for l in j + 1..cols {
                    let d = m[i * cols + j] * m[k * cols + l] - m[i * cols + l] * m[k * cols + j];
                    if d.norm() > RANK_TOL {
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn own_context(c: &Concept, context: &str) -> usize {
    c.context_index(context)
        .unwrap_or_else(|_| c.context_index(c.default_context()).expect("default context exists"))
}

/// Combines `a` and `b` under `context`. A concept that does not know the
/// context contributes its default-context weights.
pub fn combine(a: &Concept, b: &Concept, context: &str, theta: f64) -> Result<CombinedState, ScopError> {
    if !a.has_context(context) && !b.has_context(context) {
        return Err(ScopError::UnknownContext {
            concept: format!("{} and {}", a.name(), b.name()),
            context: context.to_string(),
        });
    }
    let (ea, eb) = (own_context(a, context), own_context(b, context));
    let sa = state_from_weights(a, a.contexts().nth(ea).unwrap())?;
    let sb = state_from_weights(b, b.contexts().nth(eb).unwrap())?;
    let (na, nb) = (a.state_count(), b.state_count());

    let product: Vec<f64> = (0..na * nb)
        .map(|k| sa.amplitudes[k / nb].re * sb.amplitudes[k % nb].re)
        .collect();

    let mut omega = vec![0.0; na * nb];
    for i in 0..na {
        let ra = a.nu_row(i, ea);
        for j in 0..nb {
            let rb = b.nu_row(j, eb);
            omega[i * nb + j] = ra.iter().map(|(p, v)| v * rb.get(p).copied().unwrap_or(0.0)).sum();
        }
    }
    if omega.iter().all(|&w| w <= 0.0) {
        return Err(ScopError::OrthogonalCombination {
            a: a.name().to_string(),
            b: b.name().to_string(),
            context: context.to_string(),
        });
    }
    let total: f64 = omega.iter().sum();
    let mut overlap: Vec<f64> = omega.iter().map(|w| (w / total).sqrt()).collect();
    let dot: f64 = overlap.iter().zip(&product).map(|(x, y)| x * y).sum();
    for (x, p) in overlap.iter_mut().zip(&product) {
        *x -= dot * p;
    }
    let rest = overlap.iter().map(|x| x * x).sum::<f64>().sqrt();
    let phase = Complex64::from_polar(1.0, theta);
    let amplitudes: Vec<Complex64> = if rest > RANK_TOL {
        for x in overlap.iter_mut() {
            *x /= rest;
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        product
            .iter()
            .zip(&overlap)
            .map(|(&p, &q)| (Complex64::new(p, 0.0) + phase * q) * h)
            .collect()
    } else {
        overlap.iter_mut().for_each(|x| *x = 0.0);
        product.iter().map(|&p| Complex64::new(p, 0.0)).collect()
    };
    let peak = if rest > RANK_TOL { &overlap } else { &product };
    let mut best = 0;
    for k in 0..peak.len() {
        if peak[k] > peak[best] {
            best = k;
        }
    }
    Ok(CombinedState {
        a: a.name().to_string(),
        b: b.name().to_string(),
        context: context.to_string(),
        basis_a: a.states().map(String::from).collect(),
        basis_b: b.states().map(String::from).collect(),
        separable: !has_rank_above_one(&amplitudes, na, nb),
        amplitudes,
        theta,
        product,
        overlap,
        designated: (best / nb, best % nb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scop::concept::{ConceptSpec, ContextSpec, NuRow, StateSpec, Tag};
    use std::f64::consts::PI;

    fn concept(name: &str, rows: &[(&str, &[(&str, f64)])]) -> Concept {
        let mut props: Vec<String> = rows
            .iter()
            .flat_map(|(_, w)| w.iter().map(|(p, _)| p.to_string()))
            .collect();
        props.sort();
        props.dedup();
        Concept::validate(ConceptSpec {
            name: name.into(),
            default_context: "d".into(),
            states: rows
                .iter()
                .map(|(s, _)| StateSpec { name: s.to_string(), tag: Tag::Useful })
                .collect(),
            properties: props,
            contexts: vec![ContextSpec { name: "d".into(), members: vec![] }],
            nu: rows
                .iter()
                .map(|(s, w)| NuRow {
                    state: s.to_string(),
                    context: "d".into(),
                    weights: w.iter().map(|(p, v)| (p.to_string(), *v)).collect(),
                })
                .collect(),
            mu: vec![],
        })
        .unwrap()
    }

    fn pair() -> (Concept, Concept) {
        let a = concept("A", &[("a0", &[("p", 1.0), ("q", 0.2)]), ("a1", &[("r", 1.0)])]);
        let b = concept("B", &[("b0", &[("p", 0.5)]), ("b1", &[("q", 1.0), ("r", 0.1)])]);
        (a, b)
    }

    #[test]
    fn normalized_for_any_phase() {
        let (a, b) = pair();
        for k in 0..16 {
            let s = combine(&a, &b, "d", k as f64 * PI / 8.0).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turn_is_classical() {
        let (a, b) = pair();
        let s = combine(&a, &b, "d", PI / 2.0).unwrap();
        for (p, c) in s.probabilities().iter().zip(s.classical()) {
            assert!((p - c).abs() < 1e-12);
        }
    }

    #[test]
    fn opposite_phases_differ_by_cross_term() {
        let (a, b) = pair();
        let s0 = combine(&a, &b, "d", 0.0).unwrap();
        let s1 = combine(&a, &b, "d", PI).unwrap();
        let (i, j) = s0.designated;
        let k = i * 2 + j;
        // two unit paths, total norm 2 before the 1/sqrt(2) factor
        let expect = 4.0 * s0.product[k].abs() * s0.overlap[k].abs() / 2.0;
        assert!((s0.probability(i, j) - s1.probability(i, j) - expect).abs() < 1e-12);
        let classical = s0.classical()[k];
        assert!(s0.probability(i, j) >= classical && classical >= s1.probability(i, j));
    }

    #[test]
    fn disjoint_properties_do_not_combine() {
        let a = concept("A", &[("a0", &[("p", 1.0)])]);
        let b = concept("B", &[("b0", &[("q", 1.0)])]);
        assert!(matches!(
            combine(&a, &b, "d", 0.0),
            Err(ScopError::OrthogonalCombination { .. })
        ));
        assert!(matches!(combine(&a, &b, "nowhere", 0.0), Err(ScopError::UnknownContext { .. })));
    }

    #[test]
    fn single_states_are_separable() {
        let a = concept("A", &[("a0", &[("p", 1.0)])]);
        let b = concept("B", &[("b0", &[("p", 2.0)])]);
        let s = combine(&a, &b, "d", 0.3).unwrap();
        assert!(s.separable);
        assert!((s.probability(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_test_on_known_matrices() {
        let c = |x: f64| Complex64::new(x, 0.0);
        assert!(!has_rank_above_one(&[c(1.0), c(2.0), c(2.0), c(4.0)], 2, 2));
        assert!(has_rank_above_one(&[c(1.0), c(0.0), c(0.0), c(1.0)], 2, 2));
    }
}
