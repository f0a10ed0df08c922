use serde::{Deserialize, Serialize};

/// Population summary after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub mean_fitness: f64,
    pub max_fitness: f64,
    /// Number of distinct ideas held.
    pub diversity: usize,
    /// Mean chain length.
    pub complexity: f64,
    pub mean_alpha: f64,
    /// Fraction of agents whose idea scores at least the single-step optimum.
    pub at_optimum: f64,
}

/// Centered moving average; the window shrinks at the ends.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let half = (window / 2).min(i).min(n - 1 - i);
            let lo = i - half;
            let hi = i + half + 1;
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Trailing moving average over at most `window` points.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Whether a series is non-decreasing up to `tolerance` per step.
pub fn is_non_decreasing(values: &[f64], tolerance: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - tolerance)
}

/// Rise-then-fall shape: the peak is above the start and the series ends at
/// or below `final_frac` of the peak.
pub fn rises_then_falls(values: &[f64], final_frac: f64) -> bool {
    let Some((peak_at, &peak)) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
    else {
        return false;
    };
    let first = values[0];
    let last = *values.last().unwrap();
    peak > first && peak_at < values.len() - 1 && last <= final_frac * peak
}
