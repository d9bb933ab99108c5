use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples averaged to set the reference mean, at the start and after each
/// reported change.
pub const DEFAULT_WARMUP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeSide {
    Increase,
    Decrease,
}

/// Two-sided CUSUM accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeDetectorState {
    pub reference_mean: f64,
    pub cumulative_sum_pos: f64,
    pub cumulative_sum_neg: f64,
    pub drift: f64,
    pub threshold: f64,
}

impl ChangeDetectorState {
    pub fn new(reference_mean: f64, drift: f64, threshold: f64) -> Result<Self> {
        if !(drift >= 0.0 && drift.is_finite()) {
            return Err(Error::param("k", "drift must be non-negative"));
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::param("h", "threshold must be positive"));
        }
        Ok(Self {
            reference_mean,
            cumulative_sum_pos: 0.0,
            cumulative_sum_neg: 0.0,
            drift,
            threshold,
        })
    }

    /// Feeds one value; reports a side when either sum exceeds `h`.
    /// The sums are left as they are; call [`Self::reset`] to restart.
    pub fn update(&mut self, x: f64) -> Option<ChangeSide> {
        let e = x - self.reference_mean;
        self.cumulative_sum_pos = (self.cumulative_sum_pos + e - self.drift).max(0.0);
        self.cumulative_sum_neg = (self.cumulative_sum_neg - e - self.drift).max(0.0);
        if self.cumulative_sum_pos > self.threshold {
            Some(ChangeSide::Increase)
        } else if self.cumulative_sum_neg > self.threshold {
            Some(ChangeSide::Decrease)
        } else {
            None
        }
    }

    pub fn reset(&mut self, reference_mean: f64) {
        self.reference_mean = reference_mean;
        self.cumulative_sum_pos = 0.0;
        self.cumulative_sum_neg = 0.0;
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// [`detect_change_with_warmup`] with [`DEFAULT_WARMUP`].
pub fn detect_change(series: &[f64], k: f64, h: f64) -> Result<Vec<usize>> {
    detect_change_with_warmup(series, k, h, DEFAULT_WARMUP)
}

/// Indices where a two-sided CUSUM on `series - reference_mean` crosses `h`.
///
/// The reference mean is the mean of the first `warmup` values (or all of
/// them when shorter). After each report the sums restart and the reference
/// is re-estimated from the `warmup` values following the change.
pub fn detect_change_with_warmup(series: &[f64], k: f64, h: f64, warmup: usize) -> Result<Vec<usize>> {
    if series.is_empty() {
        return Err(Error::param("series", "must not be empty"));
    }
    if warmup == 0 {
        return Err(Error::param("warmup", "must be positive"));
    }
    let window = |from: usize| mean(&series[from..(from + warmup).min(series.len())]);
    let mut state = ChangeDetectorState::new(window(0), k, h)?;
    let mut changes = Vec::new();
    for (i, &x) in series.iter().enumerate() {
        if state.update(x).is_some() {
            changes.push(i);
            if i + 1 < series.len() {
                state.reset(window(i + 1));
            }
        }
    }
    Ok(changes)
}
