//! Reference values by exhaustive enumeration.

use std::path::Path;

use commex_core::cal::{Encoding, RecyclingSpec, RecyclingTask};
use commex_core::gesture::{enumerate_action_space, optimal_set, SPACE_SIZE};
use commex_core::scop::{tire_report, ConceptNetwork};
use serde_json::{json, Value};

use crate::HarnessError;

/// Gesture optimum and maximizers, the tire walk-through amplitudes, and the
/// recycling optima under each encoding.
pub fn oracle(concepts: Option<&Path>, recycling: Option<&Path>) -> Result<Value, HarnessError> {
    let space = enumerate_action_space();
    let optimum = space.iter().map(|(_, f)| f.value()).fold(f64::NEG_INFINITY, f64::max);
    let maximizers: Vec<_> = space.iter().filter(|(_, f)| f.value() == optimum).map(|(a, _)| *a).collect();
    debug_assert_eq!(maximizers, optimal_set());

    let net = match concepts {
        Some(p) => ConceptNetwork::load(p).map_err(HarnessError::core)?,
        None => ConceptNetwork::fixture(),
    };
    let tire = tire_report(&net).map_err(HarnessError::core)?;

    let spec = match recycling {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            RecyclingSpec::from_json(&text).map_err(HarnessError::core)?
        }
        None => RecyclingSpec::fixture(),
    };
    let task = RecyclingTask::new(spec).map_err(HarnessError::core)?;
    let role = task.exhaustive_optimum(Encoding::Role).map_err(HarnessError::core)?;
    let attribute = task.exhaustive_optimum(Encoding::Attribute).map_err(HarnessError::core)?;

    Ok(json!({
        "schema_version": crate::SCHEMA_VERSION,
        "gesture": {
            "space_size": SPACE_SIZE,
            "optimum": optimum,
            "maximizers": maximizers,
        },
        "tire": tire,
        "recycling": {
            "role_restricted_optimum": role,
            "attribute_optimum": attribute,
        },
    }))
}
