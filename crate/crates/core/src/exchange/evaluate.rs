use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::object::{object_diversity, ObjectId, WorldObject};
use super::perspective::{utility_or_zero, Perspective};
use super::ExchangeError;

/// Multiplier on useful-state weights for a rating in `[0, 1]`:
/// `64^(2r - 1)`, so 0.5 is neutral and the extremes scale by 64.
pub fn rating_factor(rating: f64) -> f64 {
    64f64.powf(2.0 * rating - 1.0)
}

pub fn check_rating(rating: f64) -> Result<(), ExchangeError> {
    if (0.0..=1.0).contains(&rating) {
        Ok(())
    } else {
        Err(ExchangeError::Rating(format!("rating {rating} is outside [0, 1]")))
    }
}

/// Who scores objects.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Evaluator {
    /// Utility under the holder's perspective.
    #[default]
    Automated,
    /// Human ratings override the automated score for rated objects.
    Interactive(BTreeMap<ObjectId, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub id: ObjectId,
    pub usefulness: f64,
    pub rated: bool,
    pub waste_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsReport {
    pub objects: Vec<ObjectScore>,
    /// Distinct attribute sets.
    pub diversity: usize,
    /// Summed wastefulness `1 - U` of objects flagged as waste.
    pub wastefulness: f64,
}

/// Scores each `(perspective, object)` pair.
pub fn evaluate_objects(
    objects: &[(&Perspective, &WorldObject)],
    evaluator: &Evaluator,
    threshold: f64,
) -> Result<RatingsReport, ExchangeError> {
    if let Evaluator::Interactive(ratings) = evaluator {
        for (&id, &r) in ratings {
            check_rating(r)?;
            if !objects.iter().any(|(_, o)| o.id == id) {
                return Err(ExchangeError::UnknownObject { id });
            }
        }
    }
    let mut scores = Vec::with_capacity(objects.len());
    let mut wastefulness = 0.0;
    for (p, o) in objects {
        let (u, rated) = match evaluator {
            Evaluator::Interactive(r) if r.contains_key(&o.id) => (r[&o.id], true),
            _ => (utility_or_zero(o, p), false),
        };
        let waste_flag = 1.0 - u > threshold;
        if waste_flag {
            wastefulness += 1.0 - u;
        }
        scores.push(ObjectScore {
            id: o.id,
            usefulness: u,
            rated,
            waste_flag,
        });
    }
    Ok(RatingsReport {
        objects: scores,
        diversity: object_diversity(objects.iter().map(|(_, o)| *o)),
        wastefulness,
    })
}
