use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ScopError;

/// Tolerance on probability sums.
pub const NORM_TOL: f64 = 1e-9;

/// Whether a state counts as useful or as waste.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Useful,
    Waste,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub name: String,
    pub tag: Tag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub name: String,
    /// Concepts that make up a combined context such as playground equipment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuRow {
    pub state: String,
    pub context: String,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuRow {
    pub source: String,
    pub context: String,
    pub targets: BTreeMap<String, f64>,
}

/// The serialized form of a concept, as found in a seed file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptSpec {
    pub name: String,
    pub default_context: String,
    pub states: Vec<StateSpec>,
    pub properties: Vec<String>,
    pub contexts: Vec<ContextSpec>,
    pub nu: Vec<NuRow>,
    #[serde(default)]
    pub mu: Vec<MuRow>,
}

/// A validated concept: states, properties, contexts, weights ν and
/// transitions μ.
///
/// Transition rows that the seed file leaves out default to
/// overlap-proportional weights, `μ(t | s, e) ∝ Σₚ ν(t,e,p)·ν(s,e,p)`, or to a
/// self-loop when the state shares nothing with anyone in that context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConceptSpec", into = "ConceptSpec")]
pub struct Concept {
    name: String,
    default_context: usize,
    states: Vec<StateSpec>,
    properties: Vec<String>,
    contexts: Vec<ContextSpec>,
    nu: BTreeMap<(usize, usize), BTreeMap<String, f64>>,
    mu: BTreeMap<(usize, usize), BTreeMap<usize, f64>>,
}

fn index_of<T>(items: &[T], name: &str, key: impl Fn(&T) -> &str) -> Option<usize> {
    items.iter().position(|x| key(x) == name)
}

fn check_unique<'a>(kind: &str, names: impl Iterator<Item = &'a str>) -> Result<(), ScopError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(ScopError::Duplicate {
                kind: kind.to_string(),
                name: n.to_string(),
            });
        }
    }
    Ok(())
}

impl Concept {
    /// Checks a spec and builds the concept.
    pub fn validate(spec: ConceptSpec) -> Result<Concept, ScopError> {
        check_unique("state", spec.states.iter().map(|s| s.name.as_str()))?;
        check_unique("property", spec.properties.iter().map(|s| s.as_str()))?;
        check_unique("context", spec.contexts.iter().map(|s| s.name.as_str()))?;
        let mut c = Concept {
            name: spec.name,
            default_context: 0,
            states: spec.states,
            properties: spec.properties,
            contexts: spec.contexts,
            nu: BTreeMap::new(),
            mu: BTreeMap::new(),
        };
        c.default_context = c.context_index(&spec.default_context)?;
        for row in spec.nu {
            c.insert_nu(&row.state, &row.context, row.weights)?;
        }
        for row in spec.mu {
            let s = c.state_index(&row.source)?;
            let e = c.context_index(&row.context)?;
            let mut targets = BTreeMap::new();
            for (t, p) in &row.targets {
                let ti = c.state_index(t)?;
                if !(p.is_finite() && *p >= 0.0) {
                    return Err(ScopError::Normalization {
                        state: row.source.clone(),
                        context: row.context.clone(),
                        sum: *p,
                    });
                }
                if *p > 0.0 {
                    targets.insert(ti, *p);
                }
            }
            let sum: f64 = targets.values().sum();
            if (sum - 1.0).abs() > NORM_TOL {
                return Err(ScopError::Normalization {
                    state: row.source,
                    context: row.context,
                    sum,
                });
            }
            c.mu.insert((s, e), targets);
        }
        for (i, s) in c.states.iter().enumerate() {
            if c.weight(i, c.default_context) <= 0.0 {
                return Err(ScopError::NoDefaultSupport {
                    concept: c.name.clone(),
                    state: s.name.clone(),
                });
            }
        }
        Ok(c)
    }

    fn insert_nu(&mut self, state: &str, context: &str, weights: BTreeMap<String, f64>) -> Result<(), ScopError> {
        let s = self.state_index(state)?;
        let e = self.context_index(context)?;
        let mut clean = BTreeMap::new();
        for (p, w) in weights {
            if !self.properties.contains(&p) {
                return Err(ScopError::UnknownProperty {
                    concept: self.name.clone(),
                    property: p,
                    vocabulary: self.properties.clone(),
                });
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(ScopError::NegativeWeight {
                    state: state.to_string(),
                    context: context.to_string(),
                    property: p,
                });
            }
            if w > 0.0 {
                clean.insert(p, w);
            }
        }
        self.nu.insert((s, e), clean);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn default_context(&self) -> &str {
        &self.contexts[self.default_context].name
    }

    pub fn states(&self) -> impl Iterator<Item = &str> {
        self.states.iter().map(|s| s.name.as_str())
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn properties(&self) -> &[String] {
        &self.properties
    }

    pub fn contexts(&self) -> impl Iterator<Item = &str> {
        self.contexts.iter().map(|c| c.name.as_str())
    }

    pub fn has_context(&self, name: &str) -> bool {
        index_of(&self.contexts, name, |c| &c.name).is_some()
    }

    pub fn has_state(&self, name: &str) -> bool {
        index_of(&self.states, name, |s| &s.name).is_some()
    }

    /// Member concepts of a combined context; empty for plain contexts.
    pub fn members(&self, context: &str) -> Result<&[String], ScopError> {
        let e = self.context_index(context)?;
        Ok(&self.contexts[e].members)
    }

    pub fn state_index(&self, name: &str) -> Result<usize, ScopError> {
        index_of(&self.states, name, |s| &s.name).ok_or_else(|| ScopError::UnknownState {
            concept: self.name.clone(),
            state: name.to_string(),
        })
    }

    pub fn context_index(&self, name: &str) -> Result<usize, ScopError> {
        index_of(&self.contexts, name, |c| &c.name).ok_or_else(|| ScopError::UnknownContext {
            concept: self.name.clone(),
            context: name.to_string(),
        })
    }

    pub fn state_name(&self, i: usize) -> &str {
        &self.states[i].name
    }

    pub fn tag(&self, i: usize) -> Tag {
        self.states[i].tag
    }

    /// The useful/waste partition over state labels.
    pub fn partition(&self) -> BTreeMap<String, Tag> {
        self.states.iter().map(|s| (s.name.clone(), s.tag)).collect()
    }

    /// `ν(state, context, property)`; zero when unlisted.
    pub fn nu(&self, state: usize, context: usize, property: &str) -> f64 {
        self.nu
            .get(&(state, context))
            .and_then(|w| w.get(property))
            .copied()
            .unwrap_or(0.0)
    }

    /// The property weights of one state in one context.
    pub fn nu_row(&self, state: usize, context: usize) -> BTreeMap<String, f64> {
        self.nu.get(&(state, context)).cloned().unwrap_or_default()
    }

    /// Total weight `Σₚ ν(state, context, p)`.
    pub fn weight(&self, state: usize, context: usize) -> f64 {
        self.nu.get(&(state, context)).map_or(0.0, |w| w.values().sum())
    }

    /// Context weights of every state, in state order.
    pub fn weights(&self, context: usize) -> Vec<f64> {
        (0..self.states.len()).map(|i| self.weight(i, context)).collect()
    }

    /// Largest weight of each property over all states and contexts.
    pub fn property_levels(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for w in self.nu.values() {
            for (p, &v) in w {
                let e = out.entry(p.clone()).or_insert(0.0);
                *e = e.max(v);
            }
        }
        out
    }

    fn overlap(&self, s: usize, t: usize, context: usize) -> f64 {
        let a = self.nu.get(&(s, context));
        let b = self.nu.get(&(t, context));
        match (a, b) {
            (Some(a), Some(b)) => a.iter().map(|(p, &v)| v * b.get(p).copied().unwrap_or(0.0)).sum(),
            _ => 0.0,
        }
    }

    /// Whether the μ row for `(source, context)` was given explicitly.
    pub fn has_explicit_mu(&self, source: usize, context: usize) -> bool {
        self.mu.contains_key(&(source, context))
    }

    /// The transition row `μ(· | source, context)` over all states.
    pub fn mu_row(&self, source: usize, context: usize) -> Vec<f64> {
        let n = self.states.len();
        if let Some(row) = self.mu.get(&(source, context)) {
            let mut out = vec![0.0; n];
            for (&t, &p) in row {
                out[t] = p;
            }
            return out;
        }
        let raw: Vec<f64> = (0..n).map(|t| self.overlap(source, t, context)).collect();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            raw.into_iter().map(|x| x / sum).collect()
        } else {
            let mut out = vec![0.0; n];
            out[source] = 1.0;
            out
        }
    }

    /// A copy with one more state, carrying the given weights. Properties
    /// new to the concept join its vocabulary.
    pub fn with_state(&self, name: &str, tag: Tag, rows: &[(String, BTreeMap<String, f64>)]) -> Result<Concept, ScopError> {
        let mut spec = self.to_spec();
        if self.has_state(name) {
            return Err(ScopError::Duplicate {
                kind: "state".into(),
                name: name.into(),
            });
        }
        spec.states.push(StateSpec { name: name.into(), tag });
        for p in rows.iter().flat_map(|(_, w)| w.keys()) {
            if !spec.properties.contains(p) {
                spec.properties.push(p.clone());
            }
        }
        for (context, weights) in rows {
            spec.nu.push(NuRow {
                state: name.into(),
                context: context.clone(),
                weights: weights.clone(),
            });
        }
        for row in &mut spec.mu {
            row.targets.entry(name.into()).or_insert(0.0);
        }
        Concept::validate(spec)
    }

    /// A copy with a new context, or with an existing one's weights replaced
    /// for the listed states.
    pub fn with_context(&self, name: &str, rows: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<Concept, ScopError> {
        let mut spec = self.to_spec();
        if !self.has_context(name) {
            spec.contexts.push(ContextSpec {
                name: name.into(),
                members: Vec::new(),
            });
        }
        spec.nu.retain(|r| !(r.context == name && rows.contains_key(&r.state)));
        for (state, weights) in rows {
            spec.nu.push(NuRow {
                state: state.clone(),
                context: name.into(),
                weights: weights.clone(),
            });
        }
        Concept::validate(spec)
    }

    /// A copy keeping only the listed properties. States left with no
    /// default weight are dropped along with their rows.
    pub fn restricted_to(&self, props: &BTreeSet<String>) -> Result<Concept, ScopError> {
        let mut spec = self.to_spec();
        spec.properties.retain(|p| props.contains(p));
        for row in &mut spec.nu {
            row.weights.retain(|p, _| props.contains(p));
        }
        spec.nu.retain(|r| !r.weights.is_empty());
        let d = spec.default_context.clone();
        let kept: BTreeSet<String> = spec
            .nu
            .iter()
            .filter(|r| r.context == d)
            .map(|r| r.state.clone())
            .collect();
        if kept.is_empty() {
            return Err(ScopError::EmptySupport {
                concept: self.name.clone(),
                context: d,
            });
        }
        spec.states.retain(|s| kept.contains(&s.name));
        spec.nu.retain(|r| kept.contains(&r.state));
        spec.mu.clear();
        Concept::validate(spec)
    }

    pub fn to_spec(&self) -> ConceptSpec {
        ConceptSpec {
            name: self.name.clone(),
            default_context: self.default_context().to_string(),
            states: self.states.clone(),
            properties: self.properties.clone(),
            contexts: self.contexts.clone(),
            nu: self
                .nu
                .iter()
                .map(|(&(s, e), w)| NuRow {
                    state: self.states[s].name.clone(),
                    context: self.contexts[e].name.clone(),
                    weights: w.clone(),
                })
                .collect(),
            mu: self
                .mu
                .iter()
                .map(|(&(s, e), row)| MuRow {
                    source: self.states[s].name.clone(),
                    context: self.contexts[e].name.clone(),
                    targets: row.iter().map(|(&t, &p)| (self.states[t].name.clone(), p)).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ConceptSpec> for Concept {
    type Error = ScopError;
    fn try_from(spec: ConceptSpec) -> Result<Self, Self::Error> {
        Concept::validate(spec)
    }
}

impl From<Concept> for ConceptSpec {
    fn from(c: Concept) -> Self {
        c.to_spec()
    }
}

/// Validates a concept spec; the free-function form of [`Concept::validate`].
pub fn validate_concept(spec: ConceptSpec) -> Result<Concept, ScopError> {
    Concept::validate(spec)
}
