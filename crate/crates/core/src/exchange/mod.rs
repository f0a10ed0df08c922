//! Communal exchange over resources, objects and wastes.
//!
//! Agents extract objects from resources (producing wastes), join them,
//! judge them from their own perspective, restructure wasteful ones toward
//! less wasteful eigenstates and pass them on to neighbours, who see them
//! through their own contexts.

mod evaluate;
mod log;
mod object;
mod perspective;
mod world;

pub use evaluate::{check_rating, evaluate_objects, rating_factor, Evaluator, ObjectScore, RatingsReport};
pub use log::{niche_events, state_cause, ExchangeEvent, NicheRecord};
pub use object::{
    adjacent, eigenstate, extract, initial_state, join, object_diversity, web_edges, Bundle, IdSource, ObjectId,
    Origin, Resource, WorldObject, YieldRow,
};
pub use perspective::{
    assimilate, detect_attractor, register_combination, restructure, utility, utility_or_zero, Assimilation,
    OutcomeKind, Perspective, Registration, RestructureOutcome, ACTIVE,
};
pub use world::{
    run_exchange, tire_swing_scenario, AgentSpec, ExchangeAgent, ExchangeConfig, ExchangeMetrics, ExchangeWorld,
    ObjectView, Place, WorldFixture,
};

use thiserror::Error;

use crate::evoc::Cell;
use crate::scop::ScopError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExchangeError {
    #[error("cell {cell:?} is not on or beside resource `{resource}`")]
    Placement { resource: String, cell: Cell },
    #[error("object {id} cannot be joined with itself")]
    SelfJoin { id: ObjectId },
    #[error("object {object} has concept `{concept}`, unknown to this perspective")]
    Unconceptualized { object: ObjectId, concept: String },
    #[error("no object with id {id}")]
    UnknownObject { id: ObjectId },
    #[error("{0}")]
    Rating(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Scop(#[from] ScopError),
}
