//! Scalar abstractions.
//!
//! Frequency-based metrics only need field arithmetic and ordering, so they run
//! over [`Scalar`], which exact rationals satisfy. Everything that touches
//! thresholds, masses and utilities needs [`Real`] (f32 or f64).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Ordered field element usable for count ratios.
pub trait Scalar: Num + Signed + PartialOrd + Clone + FromPrimitive + Debug + Send + Sync {
    /// Converts an instance count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where T: Num + Signed + PartialOrd + Clone + FromPrimitive + Debug + Send + Sync {}

/// Floating point scalar used by calibration, baselines and optimization.
pub trait Real:
    Scalar + Float + ToPrimitive + Copy + Default + Display + Serialize + DeserializeOwned + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// `num / den` computed in the target type, so grid points and bin
    /// midpoints with the same rational value compare equal.
    fn ratio(num: usize, den: usize) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }

    /// Tolerance for sums that should equal one: 1e-9, widened for short floats.
    fn sum_tolerance() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(64.0))
    }
}

impl<T> Real for T where
    T: Scalar + Float + ToPrimitive + Copy + Default + Display + Serialize + DeserializeOwned + 'static
{
}

/// Maximum of a non-empty iterator of partially ordered values.
pub(crate) fn max_of<S: Scalar>(mut it: impl Iterator<Item = S>) -> Option<S> {
    let first = it.next()?;
    Some(it.fold(first, |acc, x| if x > acc { x } else { acc }))
}

pub(crate) fn min_of<S: Scalar>(mut it: impl Iterator<Item = S>) -> Option<S> {
    let first = it.next()?;
    Some(it.fold(first, |acc, x| if x < acc { x } else { acc }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn rationals_are_scalars() {
        let half: Ratio<i64> = Ratio::from_count(1) / Ratio::from_count(2);
        assert_eq!(half, Ratio::new(1, 2));
    }

    #[test]
    fn ratio_matches_literal_division() {
        assert_eq!(f64::ratio(73, 200), 0.365);
        assert_eq!(f64::ratio(73, 200), f64::ratio(73 * 5, 1000));
    }

    #[test]
    fn extrema() {
        assert_eq!(max_of([0.2, 0.9, 0.5].into_iter()), Some(0.9));
        assert_eq!(min_of([0.2, 0.9, 0.5].into_iter()), Some(0.2));
        assert_eq!(max_of(std::iter::empty::<f64>()), None);
    }
}
