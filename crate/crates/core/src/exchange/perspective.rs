use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::scop::{
    apply_context, combine, overlap_score, state_from_weights, waste_amplitude, Concept, ConceptNetwork, ConceptState,
    Tag,
};

use super::object::{eigenstate, ObjectId, WorldObject};
use super::ExchangeError;

/// Activation at which a context counts as active.
pub const ACTIVE: f64 = 1.0;

/// Slack allowed when comparing waste amplitudes.
const WASTE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assimilation {
    pub iteration: u64,
    pub object: ObjectId,
    pub from: usize,
}

/// What one agent knows: its own copies of concepts, how strongly each
/// context is activated, and what it has received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perspective {
    pub owner: usize,
    pub concepts: BTreeMap<String, Concept>,
    pub activations: BTreeMap<String, f64>,
    pub log: Vec<Assimilation>,
    /// Per-object multipliers on useful-state weights from human ratings.
    #[serde(default)]
    pub rating_factors: BTreeMap<ObjectId, f64>,
}

impl Perspective {
    pub fn new(owner: usize) -> Self {
        Perspective {
            owner,
            concepts: BTreeMap::new(),
            activations: BTreeMap::new(),
            log: Vec::new(),
            rating_factors: BTreeMap::new(),
        }
    }

    pub fn with_concepts<'a>(mut self, concepts: impl IntoIterator<Item = &'a Concept>) -> Self {
        for c in concepts {
            self.concepts.insert(c.name().to_string(), c.clone());
        }
        self
    }

    pub fn activate(mut self, context: &str) -> Self {
        self.activations.insert(context.to_string(), ACTIVE);
        self
    }

    pub fn is_active(&self, context: &str) -> bool {
        self.activations.get(context).is_some_and(|&a| a >= ACTIVE)
    }

    /// Active contexts in name order.
    pub fn active_contexts(&self) -> Vec<&str> {
        self.activations
            .iter()
            .filter(|(_, &a)| a >= ACTIVE)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn concept(&self, name: &str) -> Option<&Concept> {
        self.concepts.get(name)
    }

    /// Raises a context's activation; returns true when this crosses into
    /// active.
    pub fn expose(&mut self, context: &str, gain: f64) -> bool {
        let a = self.activations.entry(context.to_string()).or_insert(0.0);
        let was = *a >= ACTIVE;
        *a += gain;
        !was && *a >= ACTIVE
    }
}

fn useful_mass(s: &ConceptState, c: &Concept) -> f64 {
    s.tag_mass(c, Tag::Useful)
}

fn rated(u: f64, factor: f64) -> f64 {
    (factor * u).min(1.0)
}

/// Usefulness of an object from a perspective: the largest useful mass
/// over the object's current state and its projections on every active
/// context the concept knows. Unknown concepts give `None`.
pub fn utility(o: &WorldObject, p: &Perspective) -> Option<f64> {
    let c = p.concept(&o.concept)?;
    let mut best = useful_mass(&o.state, c);
    for e in p.active_contexts() {
        if !c.has_context(e) {
            continue;
        }
        if let Ok(s) = apply_context(&o.state, c, e) {
            best = best.max(useful_mass(&s, c));
        }
    }
    let factor = p.rating_factors.get(&o.id).copied().unwrap_or(1.0);
    Some(rated(best, factor).clamp(0.0, 1.0))
}

/// Utility with unknown concepts scored as zero.
pub fn utility_or_zero(o: &WorldObject, p: &Perspective) -> f64 {
    utility(o, p).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    FixedPoint,
    Cycle,
    Cutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestructureOutcome {
    pub kind: OutcomeKind,
    /// Modal labels, starting with the input state's.
    pub trajectory: Vec<String>,
    pub iterations: usize,
    /// Context used at each step.
    pub contexts: Vec<String>,
    /// Waste amplitude of the input and after each step.
    pub waste: Vec<f64>,
}

/// Classifies a trajectory: a repeated last entry is a fixed point; an
/// entry recurring at distance two or more within the trailing window is a
/// cycle.
pub fn detect_attractor<T: PartialEq>(traj: &[T], window: usize) -> Option<OutcomeKind> {
    let n = traj.len();
    if n >= 2 && traj[n - 1] == traj[n - 2] {
        return Some(OutcomeKind::FixedPoint);
    }
    let lo = n.saturating_sub(window.max(2) + 1);
    let last = traj.last()?;
    if n >= 3 && traj[lo..n - 2].iter().any(|x| x == last) {
        return Some(OutcomeKind::Cycle);
    }
    None
}

fn same_state(a: &ConceptState, b: &ConceptState) -> bool {
    a.basis == b.basis && a.amplitudes.iter().zip(&b.amplitudes).all(|(x, y)| (x - y).norm() <= 1e-12)
}

/// Re-expresses a state over the concept's basis, dropping unknown labels.
fn rebase(s: &ConceptState, c: &Concept) -> Option<ConceptState> {
    let basis: Vec<String> = c.states().map(String::from).collect();
    let amps: Vec<Complex64> = basis.iter().map(|b| s.amplitude(b).unwrap_or_default()).collect();
    ConceptState::new(basis, amps).ok()
}

/// Recursively restructures an object under a perspective.
///
/// Each step takes the active context with the most useful mass after
/// projection (ties by name), pushes the projected distribution through μ
/// and moves to the most likely target eigenstate. A step that would raise
/// the waste amplitude is refused, which ends the walk at a fixed point.
pub fn restructure(
    o: &WorldObject,
    p: &Perspective,
    max_iter: usize,
    window: usize,
) -> Result<(WorldObject, RestructureOutcome), ExchangeError> {
    let c = p.concept(&o.concept).ok_or_else(|| ExchangeError::Unconceptualized {
        object: o.id,
        concept: o.concept.clone(),
    })?;
    let max_iter = max_iter.max(1);
    let partition = c.partition();
    let mut state = rebase(&o.state, c).ok_or_else(|| ExchangeError::Unconceptualized {
        object: o.id,
        concept: o.concept.clone(),
    })?;
    let mut waste = waste_amplitude(&state, &partition)?;
    let mut out = RestructureOutcome {
        kind: OutcomeKind::Cutoff,
        trajectory: vec![state.modal().to_string()],
        iterations: 0,
        contexts: Vec::new(),
        waste: vec![waste],
    };
    let mut eigen_traj: Vec<String> = Vec::new();
    for it in 1..=max_iter {
        out.iterations = it;
        let mut best: Option<(&str, ConceptState, f64)> = None;
        for e in p.active_contexts() {
            if !c.has_context(e) {
                continue;
            }
            if let Ok(s) = apply_context(&state, c, e) {
                let u = useful_mass(&s, c);
                if best.as_ref().is_none_or(|b| u > b.2) {
                    best = Some((e, s, u));
                }
            }
        }
        let Some((e, projected, _)) = best else {
            out.trajectory.push(state.modal().to_string());
            out.waste.push(waste);
            out.kind = OutcomeKind::FixedPoint;
            break;
        };
        let ei = c.context_index(e)?;
        let mut pushed = vec![0.0; c.state_count()];
        for (si, amp) in projected.amplitudes.iter().enumerate() {
            let m = amp.norm_sqr();
            if m == 0.0 {
                continue;
            }
            for (t, w) in c.mu_row(si, ei).into_iter().enumerate() {
                pushed[t] += m * w;
            }
        }
        let mut target = 0;
        for t in 0..pushed.len() {
            if pushed[t] > pushed[target] {
                target = t;
            }
        }
        let next = eigenstate(c, c.state_name(target))?;
        let next_waste = waste_amplitude(&next, &partition)?;
        out.contexts.push(e.to_string());
        if next_waste > waste + WASTE_SLACK || same_state(&next, &state) {
            out.trajectory.push(state.modal().to_string());
            out.waste.push(waste);
            out.kind = OutcomeKind::FixedPoint;
            break;
        }
        state = next;
        waste = next_waste;
        let label = state.modal().to_string();
        out.trajectory.push(label.clone());
        out.waste.push(waste);
        eigen_traj.push(label);
        if let Some(OutcomeKind::Cycle) = detect_attractor(&eigen_traj, window) {
            out.kind = OutcomeKind::Cycle;
            break;
        }
    }
    let mut result = o.clone();
    result.state = state;
    result.contexts_used = out.contexts.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    Ok((result, out))
}

/// Brings a received object into the receiver's terms. A state the
/// receiver's active contexts cannot see at all is re-conceived from the
/// receiver's own weights in its best active context.
pub fn assimilate(o: &WorldObject, p: &Perspective) -> Result<WorldObject, ExchangeError> {
    let c = p.concept(&o.concept).ok_or_else(|| ExchangeError::Unconceptualized {
        object: o.id,
        concept: o.concept.clone(),
    })?;
    let contexts: Vec<&str> = p.active_contexts().into_iter().filter(|e| c.has_context(e)).collect();
    let mut out = o.clone();
    if let Some(s) = rebase(&o.state, c) {
        if contexts.is_empty() || contexts.iter().any(|e| apply_context(&s, c, e).is_ok()) {
            out.state = s;
            return Ok(out);
        }
    }
    let mut best: Option<(ConceptState, f64)> = None;
    for e in contexts.iter().copied().chain(std::iter::once(c.default_context())) {
        if let Ok(s) = state_from_weights(c, e) {
            let u = useful_mass(&s, c);
            if best.as_ref().is_none_or(|b| u > b.1) {
                best = Some((s, u));
            }
        }
    }
    out.state = best.expect("default context has support").0;
    Ok(out)
}

/// A state label newly added to a concept in a perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub concept: String,
    pub label: String,
}

/// After a fixed point in a combined context, registers the reached label
/// on the member concept whose joint state with the object's concept peaks
/// at that label. The member joins the perspective if it was missing.
pub fn register_combination(
    p: &mut Perspective,
    network: &ConceptNetwork,
    concept: &str,
    label: &str,
    context: &str,
) -> Result<Vec<Registration>, ExchangeError> {
    let Some(c) = p.concept(concept).cloned() else {
        return Ok(Vec::new());
    };
    if !c.has_context(context) {
        return Ok(Vec::new());
    }
    let members = c.members(context)?.to_vec();
    let mut best: Option<(Concept, f64)> = None;
    for m in &members {
        let Some(mc) = p.concept(m).or_else(|| network.get(m)).cloned() else {
            continue;
        };
        let Ok(joint) = combine(&c, &mc, context, 0.0) else {
            continue;
        };
        if joint.designated_labels().0 != label {
            continue;
        }
        let score = overlap_score(&c, &mc).0;
        if best.as_ref().is_none_or(|b| score > b.1) {
            best = Some((mc, score));
        }
    }
    let Some((member, _)) = best else {
        return Ok(Vec::new());
    };
    if member.has_state(label) {
        p.concepts.entry(member.name().to_string()).or_insert(member);
        return Ok(Vec::new());
    }
    let li = c.state_index(label)?;
    let weights = c.nu_row(li, c.context_index(context)?);
    let mut rows = vec![(member.default_context().to_string(), weights.clone())];
    if member.has_context(context) && context != member.default_context() {
        rows.push((context.to_string(), weights));
    }
    let grown = member.with_state(label, c.tag(li), &rows)?;
    let name = grown.name().to_string();
    p.concepts.insert(name.clone(), grown);
    Ok(vec![Registration {
        concept: name,
        label: label.to_string(),
    }])
}
