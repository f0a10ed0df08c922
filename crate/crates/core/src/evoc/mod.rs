//! The EVOC simulation.
//!
//! Agents on a toroidal lattice each hold one idea (a gesture, or a chain of
//! gestures when recursive recall is on). Every iteration each agent either
//! invents a variant of its idea or copies the fittest idea it can see, if
//! that idea is strictly fitter than its own. Agents also keep running value
//! estimates per part and position, learned from everything they observe,
//! and invention draws on those estimates.
//!
//! Updates are synchronous: all choices read the pre-step world.

mod agent;
mod config;
mod metrics;
mod world;

pub use agent::{associative_weights, invent_action, Agent, InventMode, QTable};
pub use config::{Cell, ConfigError, WorldConfig};
pub use metrics::{is_non_decreasing, rises_then_falls, smooth, trailing_mean, MetricsRecord};
pub use world::{compute_metrics, init_world, run, run_tracked, step, TrackedRun, World, WorldEvent, WorldSnapshot};
