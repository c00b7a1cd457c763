//! Bounded non-conformity score sets.

use crate::error::{Error, Result};

/// A nonempty set of non-conformity scores together with the closed interval
/// `[lower, upper]` that is guaranteed to contain every score.
///
/// Values are kept sorted ascending; every operation on scores in this crate
/// (quantiles, range counts) is order-invariant, and sorting once up front
/// makes repeated interval counts O(log n).
///
/// Scores outside the bounds are rejected at construction rather than
/// clipped: the interval width enters the privacy mechanisms' noise and
/// iteration calculations, so silently moving scores would corrupt them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    values: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl ScoreSet {
    pub fn new(mut values: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::domain("score bounds must be finite"));
        }
        if lower >= upper {
            return Err(Error::domain(format!(
                "score bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        if values.is_empty() {
            return Err(Error::domain("score set must be nonempty"));
        }
        if let Some(bad) = values.iter().find(|v| !(lower <= **v && **v <= upper)) {
            return Err(Error::domain(format!(
                "score {bad} outside bounds [{lower}, {upper}]"
            )));
        }
        values.sort_unstable_by(|a, b| a.total_cmp(b));
        Ok(ScoreSet {
            values,
            lower,
            upper,
        })
    }

    /// Number of calibration scores.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonemptiness is a construction invariant
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Scores in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Exact count of scores in the closed interval `[lo, hi]`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        let start = self.values.partition_point(|v| *v < lo);
        let end = self.values.partition_point(|v| *v <= hi);
        end.saturating_sub(start)
    }

    /// Exact count of scores `<= x`.
    pub fn count_at_most(&self, x: f64) -> usize {
        self.values.partition_point(|v| *v <= x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_bounds_scores() {
        assert!(ScoreSet::new(vec![0.5, 1.2], 0.0, 1.0).is_err());
        assert!(ScoreSet::new(vec![-0.1], 0.0, 1.0).is_err());
        assert!(ScoreSet::new(vec![f64::NAN], 0.0, 1.0).is_err());
    }

    #[test]
    fn rejects_empty_and_degenerate_bounds() {
        assert!(ScoreSet::new(vec![], 0.0, 1.0).is_err());
        assert!(ScoreSet::new(vec![0.5], 1.0, 1.0).is_err());
        assert!(ScoreSet::new(vec![0.5], 1.0, 0.0).is_err());
    }

    #[test]
    fn counts_use_closed_intervals() {
        let s = ScoreSet::new(vec![0.1, 0.2, 0.3], 0.0, 1.0).unwrap();
        assert_eq!(s.count_in(0.0, 0.25), 2);
        assert_eq!(s.count_in(0.0, 1.0), 3);
        assert_eq!(s.count_in(0.2, 0.2), 1);
        assert_eq!(s.count_in(0.21, 0.29), 0);
        assert_eq!(s.count_at_most(0.2), 2);
        assert_eq!(s.count_at_most(0.19999), 1);
    }

    #[test]
    fn values_are_sorted() {
        let s = ScoreSet::new(vec![0.3, 0.1, 0.2], 0.0, 1.0).unwrap();
        assert_eq!(s.values(), &[0.1, 0.2, 0.3]);
    }
}
