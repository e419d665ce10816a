use crate::error::{Error, Result};

/// Bin count used for the per-metric comparisons.
pub const DEFAULT_BINS: usize = 50;

/// A fixed-range histogram normalized to unit mass.
///
/// Values outside `[lo, hi]` are clamped into the end bins; non-finite
/// values are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    freq: Vec<f64>,
}

impl Histogram {
    pub fn new(scores: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("invalid histogram range [{lo}, {hi}]")));
        }
        let mut counts = vec![0usize; bins];
        let mut total = 0usize;
        for &s in scores.iter().filter(|s| s.is_finite()) {
            let t = ((s - lo) / (hi - lo) * bins as f64).floor();
            let idx = (t.max(0.0) as usize).min(bins - 1);
            counts[idx] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::Empty("no finite scores to histogram".into()));
        }
        let freq = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { lo, hi, freq })
    }

    /// Wraps already-normalized frequencies.
    pub fn from_frequencies(freq: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if freq.is_empty() || freq.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::invalid("frequencies must be finite and nonnegative"));
        }
        let mass: f64 = freq.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("frequencies sum to {mass}, expected 1")));
        }
        Ok(Self { lo, hi, freq })
    }

    pub fn bins(&self) -> usize {
        self.freq.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freq
    }

    /// The `bins + 1` bin edges.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.freq.len();
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

/// `½ Σ (aᵢ − bᵢ)² / (aᵢ + bᵢ)`, skipping empty bin pairs. Lies in `[0, 1]`
/// for normalized inputs.
pub fn chi2_distance(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.bins() != b.bins() || a.lo != b.lo || a.hi != b.hi {
        return Err(Error::invalid(format!(
            "histogram layouts differ: {} bins on [{}, {}] vs {} bins on [{}, {}]",
            a.bins(),
            a.lo,
            a.hi,
            b.bins(),
            b.lo,
            b.hi
        )));
    }
    Ok(0.5
        * a.freq
            .iter()
            .zip(&b.freq)
            .filter(|(x, y)| *x + *y > 0.0)
            .map(|(x, y)| (x - y).powi(2) / (x + y))
            .sum::<f64>())
}
