//! Genuine, impostor and synthetic-impostor score populations and the
//! threshold analysis of a synthetic-iris attack.
//!
//! Scores are dissimilarities. A comparison is accepted when its score is
//! below the threshold, so in [`Roc`] terms impostors are the positives:
//! the false positive rate is the real false reject rate (FRR) and the
//! false negative rate is the false accept rate (FAR).

use rayon::prelude::*;

use super::{match_templates, IrisTemplate};
use crate::error::{Error, Result};
use crate::roc::{Roc, RocPoint};

/// An enrolled image and the identity it belongs to (real images) or
/// claims (synthetic probes).
#[derive(Debug, Clone)]
pub struct Probe {
    pub identity: u64,
    pub template: IrisTemplate,
}

/// Comparisons left out of a [`ScoreSet`] for lack of jointly valid cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Unmatchable {
    pub genuine: usize,
    pub real_impostor: usize,
    pub synthetic_impostor: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    /// Real pairs of the same identity.
    pub genuine: Vec<f64>,
    /// Real pairs of different identities.
    pub real_impostor: Vec<f64>,
    /// Each synthetic probe against every real image of its claimed identity.
    pub synthetic_impostor: Vec<f64>,
    pub unmatchable: Unmatchable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub frr: f64,
    pub far: f64,
}

impl From<&RocPoint> for OperatingPoint {
    fn from(p: &RocPoint) -> Self {
        Self {
            threshold: p.threshold,
            frr: p.false_positive_rate,
            far: p.false_negative_rate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackReport {
    pub scores: ScoreSet,
    /// Genuine vs real impostor.
    pub real_roc: Roc,
    pub real_eer: f64,
    /// Genuine vs synthetic impostor.
    pub synthetic_roc: Roc,
    pub synthetic_eer: f64,
    /// Threshold that accepts no synthetic probe at the least real FRR.
    pub frr_at_zero_synthetic_far: OperatingPoint,
    /// Threshold that rejects no genuine pair at the least synthetic FAR.
    pub synthetic_far_at_zero_frr: OperatingPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Genuine,
    RealImpostor,
    SyntheticImpostor,
}

impl PairLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PairLabel::Genuine => "genuine",
            PairLabel::RealImpostor => "real_impostor",
            PairLabel::SyntheticImpostor => "synthetic_impostor",
        }
    }
}

/// One comparison. For real pairs `probe < reference` both index `real`;
/// for synthetic pairs `probe` indexes the synthetic set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub probe: usize,
    pub reference: usize,
    pub label: PairLabel,
    /// `None` when the pair is unmatchable.
    pub score: Option<f64>,
}

/// Every comparison of the protocol: each unordered real pair once, in
/// index order, then every synthetic probe against the real images of its
/// claimed identity.
pub fn pair_scores(real: &[Probe], synthetic: &[Probe]) -> Result<Vec<PairScore>> {
    for s in synthetic {
        if !real.iter().any(|r| r.identity == s.identity) {
            return Err(Error::invalid(format!(
                "synthetic probe claims identity {} with no real images",
                s.identity
            )));
        }
    }
    let mut pairs: Vec<(usize, usize, PairLabel)> = (0..real.len())
        .flat_map(|i| {
            (i + 1..real.len()).map(move |j| {
                let label = if real[i].identity == real[j].identity {
                    PairLabel::Genuine
                } else {
                    PairLabel::RealImpostor
                };
                (i, j, label)
            })
        })
        .collect();
    for (i, s) in synthetic.iter().enumerate() {
        for (j, r) in real.iter().enumerate() {
            if r.identity == s.identity {
                pairs.push((i, j, PairLabel::SyntheticImpostor));
            }
        }
    }
    Ok(pairs
        .par_iter()
        .map(|&(i, j, label)| {
            let a = if label == PairLabel::SyntheticImpostor { &synthetic[i] } else { &real[i] };
            PairScore {
                probe: i,
                reference: j,
                label,
                score: match_templates(&a.template, &real[j].template),
            }
        })
        .collect())
}

/// [`pair_scores`] grouped by label.
pub fn score_sets(real: &[Probe], synthetic: &[Probe]) -> Result<ScoreSet> {
    let mut set = ScoreSet::default();
    for p in pair_scores(real, synthetic)? {
        let (scores, missing) = match p.label {
            PairLabel::Genuine => (&mut set.genuine, &mut set.unmatchable.genuine),
            PairLabel::RealImpostor => (&mut set.real_impostor, &mut set.unmatchable.real_impostor),
            PairLabel::SyntheticImpostor => (&mut set.synthetic_impostor, &mut set.unmatchable.synthetic_impostor),
        };
        match p.score {
            Some(s) => scores.push(s),
            None => *missing += 1,
        }
    }
    Ok(set)
}

/// Builds the score populations and the threshold report.
pub fn attack_eval(real: &[Probe], synthetic: &[Probe]) -> Result<AttackReport> {
    let scores = score_sets(real, synthetic)?;
    for (name, v) in [
        ("genuine", &scores.genuine),
        ("real impostor", &scores.real_impostor),
        ("synthetic impostor", &scores.synthetic_impostor),
    ] {
        if v.is_empty() {
            return Err(Error::Empty(format!("{name} score population")));
        }
    }
    let real_roc = Roc::new(&scores.real_impostor, &scores.genuine)?;
    let synthetic_roc = Roc::new(&scores.synthetic_impostor, &scores.genuine)?;
    let pick = |keep: fn(&RocPoint) -> bool, key: fn(&RocPoint) -> f64| {
        synthetic_roc
            .points
            .iter()
            .filter(|p| keep(p))
            .min_by(|a, b| key(a).total_cmp(&key(b)))
            .map(OperatingPoint::from)
            .expect("the lowest and +∞ thresholds always qualify")
    };
    // ties resolve to the first (lowest) threshold
    let frr_at_zero_synthetic_far = pick(|p| p.false_negative_rate == 0.0, |p| p.false_positive_rate);
    let synthetic_far_at_zero_frr = pick(|p| p.false_positive_rate == 0.0, |p| p.false_negative_rate);
    Ok(AttackReport {
        real_eer: real_roc.eer(),
        synthetic_eer: synthetic_roc.eer(),
        real_roc,
        synthetic_roc,
        frr_at_zero_synthetic_far,
        synthetic_far_at_zero_frr,
        scores,
    })
}
