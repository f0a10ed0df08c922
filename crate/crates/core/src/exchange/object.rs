use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evoc::Cell;
use crate::scop::{state_from_weights, Concept, ConceptState};

use super::ExchangeError;

pub type ObjectId = u64;

/// What an extraction row produces: attributes and, optionally, the
/// eigenstate the object starts in. Without a state the object starts as
/// its concept's default-context superposition restricted to its
/// attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub attributes: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YieldRow {
    pub weight: f64,
    pub object: Bundle,
    #[serde(default)]
    pub wastes: Vec<Bundle>,
}

/// A resource base. Everything extracted from it is a state of `concept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resource {
    pub id: String,
    pub cell: Cell,
    pub concept: String,
    pub yields: Vec<YieldRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Resource(String),
    Join(ObjectId, ObjectId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: ObjectId,
    pub attributes: BTreeSet<String>,
    pub origin: Origin,
    pub concept: String,
    pub state: ConceptState,
    /// Contexts used by the last restructuring, passed on to receivers.
    #[serde(default)]
    pub contexts_used: Vec<String>,
    pub waste_flag: bool,
}

impl WorldObject {
    pub fn modal(&self) -> &str {
        self.state.modal()
    }
}

/// A unit vector on one label of the concept's basis.
pub fn eigenstate(c: &Concept, label: &str) -> Result<ConceptState, ExchangeError> {
    let i = c.state_index(label)?;
    let basis: Vec<String> = c.states().map(String::from).collect();
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
    amplitudes[i] = Complex64::new(1.0, 0.0);
    Ok(ConceptState { basis, amplitudes })
}

/// The starting state of a bundle under its concept.
pub fn initial_state(c: &Concept, b: &Bundle) -> Result<ConceptState, ExchangeError> {
    match &b.state {
        Some(label) => eigenstate(c, label),
        None => {
            let r = c.restricted_to(&b.attributes)?;
            Ok(state_from_weights(&r, r.default_context())?)
        }
    }
}

/// Hands out object ids in creation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdSource {
    next: ObjectId,
}

impl IdSource {
    pub fn next_id(&mut self) -> ObjectId {
        self.next += 1;
        self.next
    }
}

/// Whether two cells are equal or von Neumann neighbours on a torus.
pub fn adjacent(a: Cell, b: Cell, width: usize, height: usize) -> bool {
    let dx = a[0].abs_diff(b[0]);
    let dy = a[1].abs_diff(b[1]);
    let dx = dx.min(width - dx);
    let dy = dy.min(height - dy);
    dx + dy <= 1
}

/// Draws one yield row and builds its object and wastes. The agent at
/// `at` must be on or beside the resource.
pub fn extract<R: Rng + ?Sized>(
    r: &Resource,
    concept: &Concept,
    at: Cell,
    grid: (usize, usize),
    ids: &mut IdSource,
    rng: &mut R,
) -> Result<(WorldObject, Vec<WorldObject>), ExchangeError> {
    if !adjacent(at, r.cell, grid.0, grid.1) {
        return Err(ExchangeError::Placement {
            resource: r.id.clone(),
            cell: at,
        });
    }
    let total: f64 = r.yields.iter().map(|y| y.weight).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut row = r.yields.last().expect("validated resource has yields");
    for y in &r.yields {
        acc += y.weight;
        if u < acc {
            row = y;
            break;
        }
    }
    let make = |b: &Bundle, ids: &mut IdSource| -> Result<WorldObject, ExchangeError> {
        Ok(WorldObject {
            id: ids.next_id(),
            attributes: b.attributes.clone(),
            origin: Origin::Resource(r.id.clone()),
            concept: r.concept.clone(),
            state: initial_state(concept, b)?,
            contexts_used: Vec::new(),
            waste_flag: false,
        })
    };
    let object = make(&row.object, ids)?;
    let wastes = row.wastes.iter().map(|b| make(b, ids)).collect::<Result<Vec<_>, _>>()?;
    Ok((object, wastes))
}

/// Lego-style join: the union of attributes, recorded as a join of both
/// parents. The join keeps the first parent's concept and state.
pub fn join(a: &WorldObject, b: &WorldObject, ids: &mut IdSource) -> Result<WorldObject, ExchangeError> {
    if a.id == b.id {
        return Err(ExchangeError::SelfJoin { id: a.id });
    }
    Ok(WorldObject {
        id: ids.next_id(),
        attributes: a.attributes.union(&b.attributes).cloned().collect(),
        origin: Origin::Join(a.id, b.id),
        concept: a.concept.clone(),
        state: a.state.clone(),
        contexts_used: Vec::new(),
        waste_flag: a.waste_flag,
    })
}

/// Number of distinct attribute sets.
pub fn object_diversity<'a>(objects: impl IntoIterator<Item = &'a WorldObject>) -> usize {
    objects.into_iter().map(|o| &o.attributes).collect::<BTreeSet<_>>().len()
}

/// Distinct parent-to-child edges among joined objects.
pub fn web_edges<'a>(objects: impl IntoIterator<Item = &'a WorldObject>) -> usize {
    let mut edges = BTreeSet::new();
    for o in objects {
        if let Origin::Join(a, b) = o.origin {
            edges.insert((a, o.id));
            edges.insert((b, o.id));
        }
    }
    edges.len()
}

/// Resources checked against a concept network.
pub fn validate_resources(resources: &[Resource], concepts: &BTreeMap<String, Concept>) -> Result<(), ExchangeError> {
    for r in resources {
        let c = concepts.get(&r.concept).ok_or_else(|| {
            ExchangeError::Fixture(format!("resource `{}` names unknown concept `{}`", r.id, r.concept))
        })?;
        if r.yields.is_empty() || r.yields.iter().any(|y| !(y.weight > 0.0 && y.weight.is_finite())) {
            return Err(ExchangeError::Fixture(format!("resource `{}` needs positive yield weights", r.id)));
        }
        for y in &r.yields {
            for b in std::iter::once(&y.object).chain(&y.wastes) {
                initial_state(c, b)?;
            }
        }
    }
    Ok(())
}
