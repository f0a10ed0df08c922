use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::concept::{Concept, Tag, NORM_TOL};
use super::ScopError;

/// A unit amplitude vector over a concept's states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptState {
    pub basis: Vec<String>,
    pub amplitudes: Vec<Complex64>,
}

impl ConceptState {
    /// Builds a state and renormalizes it; a zero vector is rejected.
    pub fn new(basis: Vec<String>, amplitudes: Vec<Complex64>) -> Result<Self, ScopError> {
        assert_eq!(basis.len(), amplitudes.len(), "basis and amplitudes differ in length");
        let n = norm_sqr(&amplitudes).sqrt();
        if n == 0.0 {
            return Err(ScopError::Unnormalized { norm: 0.0 });
        }
        let amplitudes = amplitudes.into_iter().map(|c| c / n).collect();
        Ok(ConceptState { basis, amplitudes })
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn amplitude(&self, label: &str) -> Option<Complex64> {
        self.basis.iter().position(|b| b == label).map(|i| self.amplitudes[i])
    }

    pub fn probability(&self, label: &str) -> f64 {
        self.amplitude(label).map_or(0.0, |c| c.norm_sqr())
    }

    /// Probability mass on states with the given tag.
    pub fn tag_mass(&self, concept: &Concept, tag: Tag) -> f64 {
        self.basis
            .iter()
            .zip(&self.amplitudes)
            .filter(|(b, _)| concept.state_index(b).is_ok_and(|i| concept.tag(i) == tag))
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    /// The most probable label; ties go to the earlier basis entry.
    pub fn modal(&self) -> &str {
        let mut best = 0;
        for (i, c) in self.amplitudes.iter().enumerate() {
            if c.norm_sqr() > self.amplitudes[best].norm_sqr() {
                best = i;
            }
        }
        &self.basis[best]
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

fn from_weights(basis: Vec<String>, w: &[f64], phases: Option<&[Complex64]>) -> ConceptState {
    let total: f64 = w.iter().sum();
    let amplitudes = w
        .iter()
        .enumerate()
        .map(|(i, &wi)| {
            let r = (wi / total).sqrt();
            match phases {
                Some(p) if p[i].norm() > 0.0 => p[i] / p[i].norm() * r,
                _ => Complex64::new(r, 0.0),
            }
        })
        .collect();
    ConceptState { basis, amplitudes }
}

/// Amplitudes `sqrt(wᵢ / Σw)` with zero phase, where `wᵢ` is state i's
/// total weight in the context.
pub fn state_from_weights(c: &Concept, context: &str) -> Result<ConceptState, ScopError> {
    let e = c.context_index(context)?;
    let w = c.weights(e);
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(ScopError::EmptySupport {
            concept: c.name().to_string(),
            context: context.to_string(),
        });
    }
    Ok(from_weights(c.states().map(String::from).collect(), &w, None))
}

/// Projects onto the states that carry weight in `context` and are present
/// in `s`, and reweights them by the square root of those weights. Phases
/// inside the support survive.
pub fn apply_context(s: &ConceptState, c: &Concept, context: &str) -> Result<ConceptState, ScopError> {
    let e = c.context_index(context)?;
    let basis: Vec<String> = c.states().map(String::from).collect();
    let mut w = Vec::with_capacity(basis.len());
    let mut phase = Vec::with_capacity(basis.len());
    let mut overlap = 0.0;
    for (i, label) in basis.iter().enumerate() {
        let amp = s.amplitude(label).unwrap_or_default();
        let wi = if amp.norm_sqr() > 0.0 { c.weight(i, e) } else { 0.0 };
        if wi > 0.0 {
            overlap += amp.norm_sqr();
        }
        w.push(wi);
        phase.push(amp);
    }
    if overlap <= 0.0 {
        return Err(ScopError::OrthogonalContext {
            context: context.to_string(),
        });
    }
    Ok(from_weights(basis, &w, Some(&phase)))
}

/// Born-rule probabilities `|cᵢ|²`.
pub fn collapse_distribution(s: &ConceptState) -> Result<BTreeMap<String, f64>, ScopError> {
    if !s.is_normalized() {
        return Err(ScopError::Unnormalized { norm: s.norm_sqr().sqrt() });
    }
    let mut out = BTreeMap::new();
    for (b, c) in s.basis.iter().zip(&s.amplitudes) {
        *out.entry(b.clone()).or_insert(0.0) += c.norm_sqr();
    }
    Ok(out)
}

/// Draws one basis label with probability `|cᵢ|²`, using one uniform draw.
pub fn collapse_sample<R: Rng + ?Sized>(s: &ConceptState, rng: &mut R) -> String {
    let u: f64 = rng.random::<f64>() * s.norm_sqr();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, c) in s.amplitudes.iter().enumerate() {
        let p = c.norm_sqr();
        if p == 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return s.basis[i].clone();
        }
    }
    s.basis[last].clone()
}

/// `sqrt` of the probability mass on waste-tagged labels.
pub fn waste_amplitude(s: &ConceptState, partition: &BTreeMap<String, Tag>) -> Result<f64, ScopError> {
    let mut waste = 0.0;
    for (b, c) in s.basis.iter().zip(&s.amplitudes) {
        match partition.get(b) {
            Some(Tag::Waste) => waste += c.norm_sqr(),
            Some(Tag::Useful) => {}
            None => return Err(ScopError::Unpartitioned { label: b.clone() }),
        }
    }
    Ok(waste.sqrt().min(1.0))
}
