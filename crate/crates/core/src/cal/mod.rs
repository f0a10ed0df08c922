//! A cultural optimizer (CAL), a reference genetic algorithm and the
//! problems used to compare them.
//!
//! The CAL is depth-first: a small population of agents each refine one
//! solution, choosing where to vary it from what has worked before,
//! borrowing from better neighbours, widening their search when stuck and
//! finally re-representing the problem. The GA is breadth-first and never
//! leaves its initial representation.

mod compare;
mod cultural;
mod ga;
mod problem;
mod trace;

pub use compare::{compare, ComparisonReport, OptimizerSummary, Verdict, REPORT_SCHEMA_VERSION};
pub use cultural::{cal_run, CalAgent, CalConfig};
pub use ga::{ga_run, GaConfig};
pub use problem::{
    rosenbrock, ArtifactSpec, Encoding, Genome, ItemSpec, Problem, ProblemKind, RecyclingSpec, RecyclingTask,
    SlotSpec, RECYCLING_ENCODINGS, RECYCLING_SCHEMA_VERSION,
};
pub use trace::{Optimizer, Trace, TRACE_SCHEMA_VERSION};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalError {
    #[error("domain: {0}")]
    Domain(String),
    #[error("recycling spec: {0}")]
    Spec(String),
    #[error("recycling task `{0}` is unsatisfiable under every encoding")]
    Infeasible(String),
    #[error("comparison: {0}")]
    Comparison(String),
    #[error("{0}")]
    Config(String),
}
