//! Threshold grid shared by all constrained searches.

use serde::{Deserialize, Serialize};

use super::DecisionError;
use crate::num::Real;

pub const DEFAULT_RESOLUTION: f64 = 0.005;

/// Absolute slack added to every feasibility comparison so that two
/// summation orders of the same masses never disagree on a boundary case.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// The points `k / n` for `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub steps: usize,
}

impl ThresholdGrid {
    /// Grid with spacing `resolution`, which must lie in `(0, 0.1]` and divide 1.
    pub fn from_resolution<T: Real>(resolution: T) -> Result<Self, DecisionError> {
        let r = resolution.to_f64().unwrap_or(f64::NAN);
        if !(r > 0.0 && r <= 0.1 + 1e-12) {
            return Err(DecisionError::InvalidResolution(r));
        }
        let steps = (1.0 / r).round() as usize;
        if ((steps as f64) * r - 1.0).abs() > 1e-6 {
            return Err(DecisionError::InvalidResolution(r));
        }
        Ok(ThresholdGrid { steps })
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn resolution<T: Real>(&self) -> T {
        T::ratio(1, self.steps)
    }

    pub fn value<T: Real>(&self, k: usize) -> T {
        T::ratio(k, self.steps)
    }

    pub fn values<T: Real>(&self) -> impl Iterator<Item = T> + '_ {
        (0..=self.steps).map(move |k| self.value(k))
    }

    /// Grid indices within `half_width` (plus slack) of `x`.
    pub fn indices_near<T: Real>(&self, x: T, half_width: T) -> Option<(usize, usize)> {
        let n = T::from_count(self.steps);
        let reach = half_width + T::lit(FEASIBILITY_SLACK);
        let lo = ((x - reach) * n).ceil().max(T::zero());
        let hi = ((x + reach) * n).floor().min(n);
        if lo > hi {
            return None;
        }
        Some((lo.to_usize()?, hi.to_usize()?))
    }

    /// First index whose grid value is at least `x`.
    pub fn first_at_least<T: Real>(&self, x: T) -> usize {
        (0..=self.steps).find(|&k| self.value::<T>(k) >= x).unwrap_or(self.steps + 1)
    }
}
