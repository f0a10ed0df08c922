use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::evoc::Cell;

use super::object::ObjectId;
use super::perspective::OutcomeKind;
use super::ExchangeError;

/// One line of the exchange event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExchangeEvent {
    RunStart {
        seed: u64,
        agents: usize,
        threshold: f64,
    },
    Extract {
        iteration: u64,
        agent: usize,
        resource: String,
        object: ObjectId,
        wastes: Vec<ObjectId>,
    },
    Join {
        iteration: u64,
        agent: usize,
        parents: [ObjectId; 2],
        object: ObjectId,
    },
    Restructure {
        iteration: u64,
        agent: usize,
        object: ObjectId,
        outcome: OutcomeKind,
        steps: usize,
        trajectory: Vec<String>,
    },
    /// A waste turned useful and was picked up.
    Actualize {
        iteration: u64,
        agent: usize,
        object: ObjectId,
    },
    Focus {
        iteration: u64,
        agent: usize,
        alpha: f64,
        context: String,
    },
    ContextActivated {
        iteration: u64,
        agent: usize,
        context: String,
        cause: String,
    },
    ConceptEntered {
        iteration: u64,
        agent: usize,
        concept: String,
    },
    StateRegistered {
        iteration: u64,
        agent: usize,
        concept: String,
        label: String,
    },
    /// An object's utility rose through the threshold because the owner's
    /// perspective changed; `before` is its utility under the prior
    /// perspective.
    UtilityCrossed {
        iteration: u64,
        agent: usize,
        object: ObjectId,
        before: f64,
        after: f64,
        cause: String,
    },
    Transmit {
        iteration: u64,
        from: usize,
        to: usize,
        object: ObjectId,
    },
    TransmissionBlocked {
        iteration: u64,
        from: usize,
        to: usize,
        cells: [Cell; 2],
    },
    Unconceptualized {
        iteration: u64,
        agent: usize,
        object: ObjectId,
        concept: String,
    },
    Evicted {
        iteration: u64,
        object: ObjectId,
    },
    Rated {
        iteration: u64,
        object: ObjectId,
        rating: f64,
    },
    ContextDefined {
        iteration: u64,
        concept: String,
        context: String,
    },
    RunEnd {
        iteration: u64,
    },
}

/// Cause tag for a newly registered state.
pub fn state_cause(concept: &str, label: &str) -> String {
    format!("state:{concept}/{label}")
}

/// An invention that made a previously useless object useful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NicheRecord {
    pub iteration: u64,
    pub agent: usize,
    /// The object whose niche opened.
    pub object: ObjectId,
    /// The registered state that opened it.
    pub enabler: String,
    pub before: f64,
    pub after: f64,
}

/// Replays a complete event log and reports every niche opening: an
/// object's first rise through the threshold caused by a state that was
/// registered earlier in the log, with the object below threshold under
/// the prior perspective.
pub fn niche_events(log: &[ExchangeEvent]) -> Result<Vec<NicheRecord>, ExchangeError> {
    let threshold = match log.first() {
        Some(ExchangeEvent::RunStart { threshold, .. }) => *threshold,
        _ => return Err(ExchangeError::Replay("log does not start with run_start".into())),
    };
    if !matches!(log.last(), Some(ExchangeEvent::RunEnd { .. })) {
        return Err(ExchangeError::Replay("log does not end with run_end".into()));
    }
    let mut registered: BTreeSet<(usize, String)> = BTreeSet::new();
    let mut crossed: BTreeSet<ObjectId> = BTreeSet::new();
    let mut out = Vec::new();
    for ev in log {
        match ev {
            ExchangeEvent::StateRegistered { agent, concept, label, .. } => {
                registered.insert((*agent, state_cause(concept, label)));
            }
            ExchangeEvent::UtilityCrossed {
                iteration,
                agent,
                object,
                before,
                after,
                cause,
            } => {
                if !crossed.insert(*object) {
                    continue;
                }
                if *before < threshold && *after >= threshold && registered.contains(&(*agent, cause.clone())) {
                    out.push(NicheRecord {
                        iteration: *iteration,
                        agent: *agent,
                        object: *object,
                        enabler: cause.clone(),
                        before: *before,
                        after: *after,
                    });
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn needs_a_complete_log() {
        assert!(niche_events(&[]).is_err());
        let start = ExchangeEvent::RunStart {
            seed: 0,
            agents: 1,
            threshold: 0.5,
        };
        assert!(niche_events(std::slice::from_ref(&start)).is_err());
        assert!(niche_events(&[start, ExchangeEvent::RunEnd { iteration: 3 }]).unwrap().is_empty());
    }

    #[test]
    fn crossing_needs_a_registered_cause() {
        let crossing = |cause: &str| ExchangeEvent::UtilityCrossed {
            iteration: 2,
            agent: 0,
            object: 7,
            before: 0.4,
            after: 0.8,
            cause: cause.into(),
        };
        let log = vec![
            ExchangeEvent::RunStart {
                seed: 0,
                agents: 1,
                threshold: 0.5,
            },
            crossing("context:transport"),
            ExchangeEvent::RunEnd { iteration: 3 },
        ];
        assert!(niche_events(&log).unwrap().is_empty());
        let log = vec![
            log[0].clone(),
            ExchangeEvent::StateRegistered {
                iteration: 1,
                agent: 0,
                concept: "SWING".into(),
                label: "tire_swing".into(),
            },
            crossing(&state_cause("SWING", "tire_swing")),
            crossing(&state_cause("SWING", "tire_swing")),
            log[2].clone(),
        ];
        assert_eq!(niche_events(&log).unwrap().len(), 1);
    }
}
