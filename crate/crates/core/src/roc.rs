//! Error-rate curves for two-class score populations.
//!
//! Convention: a sample is flagged *positive* when its score is at or above
//! the threshold. The false positive rate is the fraction of negatives
//! flagged, the false negative rate the fraction of positives missed.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
}

/// Operating points at every distinct score plus `+∞`, sorted by ascending
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub points: Vec<RocPoint>,
}

fn check(positives: &[f64], negatives: &[f64]) -> Result<()> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("ROC needs both score populations".into()));
    }
    if positives.iter().chain(negatives).any(|v| !v.is_finite()) {
        return Err(Error::invalid("ROC scores must be finite"));
    }
    Ok(())
}

impl Roc {
    pub fn new(positives: &[f64], negatives: &[f64]) -> Result<Self> {
        check(positives, negatives)?;
        let mut pos = positives.to_vec();
        let mut neg = negatives.to_vec();
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        thresholds.push(f64::INFINITY);

        let (np, nn) = (pos.len() as f64, neg.len() as f64);
        let points = thresholds
            .into_iter()
            .map(|t| {
                // counts strictly below t
                let pos_below = pos.partition_point(|&s| s < t) as f64;
                let neg_below = neg.partition_point(|&s| s < t) as f64;
                RocPoint {
                    threshold: t,
                    false_positive_rate: (nn - neg_below) / nn,
                    false_negative_rate: pos_below / np,
                }
            })
            .collect();
        Ok(Self { points })
    }

    /// Rate at which the two error curves cross, linearly interpolated
    /// between the adjacent operating points that bracket the crossing.
    pub fn eer(&self) -> f64 {
        let diff = |p: &RocPoint| p.false_positive_rate - p.false_negative_rate;
        let first = &self.points[0];
        if diff(first) <= 0.0 {
            return first.false_positive_rate;
        }
        for pair in self.points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let (da, db) = (diff(a), diff(b));
            if db <= 0.0 {
                if db == 0.0 {
                    return b.false_positive_rate;
                }
                let t = da / (da - db);
                let fpr = a.false_positive_rate + t * (b.false_positive_rate - a.false_positive_rate);
                let fnr = a.false_negative_rate + t * (b.false_negative_rate - a.false_negative_rate);
                return 0.5 * (fpr + fnr);
            }
        }
        // the +∞ point always has FPR 0 and FNR 1
        unreachable!("error curves always cross")
    }
}

pub fn roc(positives: &[f64], negatives: &[f64]) -> Result<Roc> {
    Roc::new(positives, negatives)
}

/// Equal error rate of `positives` (expected high) against `negatives`.
pub fn eer(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    Ok(Roc::new(positives, negatives)?.eer())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn disjoint_populations_have_zero_eer() {
        assert_eq!(eer(&[0.8, 0.9, 0.95], &[0.1, 0.2, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn identical_populations_have_half_eer() {
        let s = [0.1, 0.4, 0.4, 0.7, 0.9];
        assert!((eer(&s, &s).unwrap() - 0.5).abs() < 1e-12);
        assert!((eer(&[0.3; 4], &[0.3; 7]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interpolates_between_operating_points() {
        // pos {2, 3}, neg {1, 2.5}: at t=2.5 FPR=1/2, FNR=1/2
        assert!((eer(&[2.0, 3.0], &[1.0, 2.5]).unwrap() - 0.5).abs() < 1e-12);
        // pos {2, 3, 4, 5}, neg {1}: perfectly separable
        assert_eq!(eer(&[2.0, 3.0, 4.0, 5.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn empty_population_is_rejected() {
        assert!(eer(&[], &[0.1]).is_err());
    }

    proptest! {
        #[test]
        fn curves_are_monotone(pos in prop::collection::vec(0.0f64..1.0, 1..40),
                               neg in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let r = roc(&pos, &neg).unwrap();
            for w in r.points.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[1].false_positive_rate <= w[0].false_positive_rate);
                prop_assert!(w[1].false_negative_rate >= w[0].false_negative_rate);
            }
            let e = r.eer();
            prop_assert!((0.0..=1.0).contains(&e));
        }
    }
}
