//! State-context-property concepts.
//!
//! A [`Concept`] has named states, properties and contexts, a weight
//! function ν over (state, context, property) and a transition function μ.
//! A [`ConceptState`] is a unit amplitude vector over the concept's states;
//! contexts act on it as renormalized projections and measurement follows
//! the Born rule. [`combine`] builds the joint state of two concepts, whose
//! overlap component carries an interference phase.

mod combine;
mod concept;
mod network;
mod state;

pub use combine::{combine, CombinedState};
pub use concept::{
    validate_concept, Concept, ConceptSpec, ContextSpec, MuRow, NuRow, StateSpec, Tag, NORM_TOL,
};
pub use network::{
    candidate_contexts, overlap_score, tire_report, ConceptNetwork, RankedContext, TireReport, SEED_SCHEMA_VERSION,
};
pub use state::{
    apply_context, collapse_distribution, collapse_sample, state_from_weights, waste_amplitude, ConceptState,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScopError {
    #[error("μ row for state `{state}` in context `{context}` sums to {sum}, not 1")]
    Normalization { state: String, context: String, sum: f64 },
    #[error("negative or non-finite ν for state `{state}`, context `{context}`, property `{property}`")]
    NegativeWeight {
        state: String,
        context: String,
        property: String,
    },
    #[error("state `{state}` of `{concept}` has no weight in the default context")]
    NoDefaultSupport { concept: String, state: String },
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: String, name: String },
    #[error("concept `{concept}` has no state `{state}`")]
    UnknownState { concept: String, state: String },
    #[error("concept `{concept}` has no context `{context}`")]
    UnknownContext { concept: String, context: String },
    #[error("concept `{concept}` has no property `{property}` (known: {vocabulary:?})")]
    UnknownProperty {
        concept: String,
        property: String,
        vocabulary: Vec<String>,
    },
    #[error("every state of `{concept}` has zero weight in context `{context}`")]
    EmptySupport { concept: String, context: String },
    #[error("context `{context}` is orthogonal to the state")]
    OrthogonalContext { context: String },
    #[error("`{a}` and `{b}` share no weight in context `{context}`")]
    OrthogonalCombination { a: String, b: String, context: String },
    #[error("state norm is {norm}, not 1")]
    Unnormalized { norm: f64 },
    #[error("basis label `{label}` is not tagged useful or waste")]
    Unpartitioned { label: String },
    #[error("seed file: {0}")]
    Seed(String),
}
