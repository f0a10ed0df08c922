use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::concept::{Concept, ContextSpec};
use super::ScopError;

/// Current seed-file schema version.
pub const SEED_SCHEMA_VERSION: u32 = 1;

const FIXTURE: &str = include_str!("../../fixtures/concepts.json");

/// A set of concepts plus network-level contexts made of member concepts.
///
/// Seed files are JSON:
///
/// ```json
/// {
///   "schema_version": 1,
///   "contexts": [{ "name": "playground_equipment", "members": ["SWING", "SLIDE"] }],
///   "concepts": [{
///     "name": "TIRE",
///     "default_context": "default",
///     "states": [{ "name": "tire", "tag": "useful" }, { "name": "worn", "tag": "waste" }],
///     "properties": ["round", "tread"],
///     "contexts": [{ "name": "default" }],
///     "nu": [{ "state": "tire", "context": "default", "weights": { "tread": 0.1 } }],
///     "mu": [{ "source": "tire", "context": "default", "targets": { "tire": 1.0 } }]
///   }]
/// }
/// ```
///
/// `mu` is optional per concept; missing rows default to overlap-weighted
/// transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptNetwork {
    pub schema_version: u32,
    #[serde(default)]
    pub contexts: Vec<ContextSpec>,
    pub concepts: Vec<Concept>,
}

impl ConceptNetwork {
    pub fn from_json(text: &str) -> Result<Self, ScopError> {
        let net: ConceptNetwork = serde_json::from_str(text).map_err(|e| ScopError::Seed(e.to_string()))?;
        if net.schema_version != SEED_SCHEMA_VERSION {
            return Err(ScopError::Seed(format!(
                "unsupported schema_version {} (expected {SEED_SCHEMA_VERSION})",
                net.schema_version
            )));
        }
        for g in &net.contexts {
            for m in &g.members {
                if net.get(m).is_none() {
                    return Err(ScopError::Seed(format!("context `{}` names unknown member `{m}`", g.name)));
                }
            }
        }
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<Self, ScopError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScopError::Seed(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The shipped TIRE / SWING / SLIDE / ROPE network.
    pub fn fixture() -> Self {
        Self::from_json(FIXTURE).expect("shipped fixture is valid")
    }

    pub fn get(&self, name: &str) -> Option<&Concept> {
        self.concepts.iter().find(|c| c.name() == name)
    }

    pub fn replace(&mut self, concept: Concept) {
        match self.concepts.iter_mut().find(|c| c.name() == concept.name()) {
            Some(slot) => *slot = concept,
            None => self.concepts.push(concept),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }
}

/// A foreign concept or network context that shares properties with a
/// concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedContext {
    pub name: String,
    pub score: f64,
    /// Shared properties contributing to the score.
    pub shared: Vec<String>,
}

/// `Σ` over shared properties of the smaller of the two concepts' peak
/// weights for that property.
pub fn overlap_score(a: &Concept, b: &Concept) -> (f64, Vec<String>) {
    let la = a.property_levels();
    let lb = b.property_levels();
    let mut score = 0.0;
    let mut shared = Vec::new();
    for (p, &x) in &la {
        if let Some(&y) = lb.get(p) {
            let m = x.min(y);
            if m > 0.0 {
                score += m;
                shared.push(p.clone());
            }
        }
    }
    (score, shared)
}

/// Ranks every other concept, and every network context, by its overlap with
/// `c`. A network context scores the sum over its members. Only positive
/// scores are kept; ties go to the lexicographically smaller name.
pub fn candidate_contexts(c: &Concept, network: &ConceptNetwork) -> Vec<RankedContext> {
    let mut per: BTreeMap<&str, (f64, Vec<String>)> = BTreeMap::new();
    for other in &network.concepts {
        if other.name() != c.name() {
            per.insert(other.name(), overlap_score(c, other));
        }
    }
    let mut out: Vec<RankedContext> = per
        .iter()
        .map(|(n, (s, sh))| RankedContext {
            name: n.to_string(),
            score: *s,
            shared: sh.clone(),
        })
        .collect();
    for g in &network.contexts {
        if g.members.iter().any(|m| m == c.name()) {
            continue;
        }
        let mut score = 0.0;
        let mut shared: Vec<String> = Vec::new();
        for m in &g.members {
            if let Some((s, sh)) = per.get(m.as_str()) {
                score += s;
                shared.extend(sh.iter().cloned());
            }
        }
        shared.sort();
        shared.dedup();
        out.push(RankedContext {
            name: g.name.clone(),
            score,
            shared,
        });
    }
    out.retain(|r| r.score > 0.0);
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
    out
}

/// The amplitudes of the tire walk-through, read off a network holding TIRE.
///
/// `a₀, a₁` are the useful and waste amplitudes in the default context and
/// `b₀, b₁` the same under playground equipment. Within the useful part,
/// `b₂, b₃, b₄` are the unit-vector components along plain tire, tire swing
/// and tire slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TireReport {
    pub p_default_useful: f64,
    pub p_default_waste: f64,
    pub p_playground_useful: f64,
    pub p_playground_waste: f64,
    pub p_transport_useful: f64,
    pub a: [f64; 2],
    pub b: [f64; 5],
    pub playground_modal: String,
    pub candidates: Vec<RankedContext>,
}

pub fn tire_report(net: &ConceptNetwork) -> Result<TireReport, ScopError> {
    use super::concept::Tag;
    use super::state::{apply_context, state_from_weights};
    let tire = net.get("TIRE").ok_or_else(|| ScopError::Seed("no TIRE concept".into()))?;
    let d = state_from_weights(tire, tire.default_context())?;
    let e = apply_context(&d, tire, "playground_equipment")?;
    let t = apply_context(&d, tire, "transport")?;
    let b0 = e.tag_mass(tire, Tag::Useful).sqrt();
    let within = |label: &str| e.amplitude(label).map_or(0.0, |c| c.norm()) / b0;
    Ok(TireReport {
        p_default_useful: d.tag_mass(tire, Tag::Useful),
        p_default_waste: d.tag_mass(tire, Tag::Waste),
        p_playground_useful: e.tag_mass(tire, Tag::Useful),
        p_playground_waste: e.tag_mass(tire, Tag::Waste),
        p_transport_useful: t.tag_mass(tire, Tag::Useful),
        a: [d.tag_mass(tire, Tag::Useful).sqrt(), d.tag_mass(tire, Tag::Waste).sqrt()],
        b: [
            b0,
            e.tag_mass(tire, Tag::Waste).sqrt(),
            within("tire"),
            within("tire_swing"),
            within("tire_slide"),
        ],
        playground_modal: e.modal().to_string(),
        candidates: candidate_contexts(tire, net),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_loads_and_round_trips() {
        let net = ConceptNetwork::fixture();
        assert_eq!(net.concepts.len(), 4);
        let back = ConceptNetwork::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_bad_seed_files() {
        assert!(ConceptNetwork::from_json("{").is_err());
        let wrong = FIXTURE.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1);
        assert!(ConceptNetwork::from_json(&wrong).is_err());
        let ghost = FIXTURE.replacen("[\"SWING\", \"SLIDE\"]", "[\"GHOST\"]", 1);
        assert!(ConceptNetwork::from_json(&ghost).is_err());
    }

    #[test]
    fn no_shared_properties_no_candidates() {
        let text = r#"{"schema_version": 1, "concepts": [
            {"name": "A", "default_context": "d", "states": [{"name": "a", "tag": "useful"}],
             "properties": ["p"], "contexts": [{"name": "d"}],
             "nu": [{"state": "a", "context": "d", "weights": {"p": 1.0}}]},
            {"name": "B", "default_context": "d", "states": [{"name": "b", "tag": "waste"}],
             "properties": ["q"], "contexts": [{"name": "d"}],
             "nu": [{"state": "b", "context": "d", "weights": {"q": 1.0}}]}]}"#;
        let net = ConceptNetwork::from_json(text).unwrap();
        assert!(candidate_contexts(&net.concepts[0], &net).is_empty());
    }
}
