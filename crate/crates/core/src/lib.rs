//! Communal-exchange cultural evolution.
//!
//! - [`gesture`]: the discrete action space and its fitness oracle.
//! - [`evoc`]: agents that invent, imitate and learn on a torus.
//! - [`chain`]: recursive recall over chained actions.
//! - [`focus`]: fitness-driven reactivity and shifting landscapes.
//! - [`scop`]: state-context-property concepts with amplitude states.
//! - [`exchange`]: resources, objects, perspectives and restructuring.
//! - [`cal`]: a cultural optimizer, a reference GA and benchmarks.

pub mod cal;
pub mod chain;
pub mod evoc;
pub mod exchange;
pub mod focus;
pub mod gesture;
pub mod scop;
