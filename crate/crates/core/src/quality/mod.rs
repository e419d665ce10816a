//! Iris image quality: segmentation, the six quality scores, and histogram
//! comparison of score distributions.

mod histogram;
mod metrics;
mod segment;
mod sharpness;

pub use histogram::{chi2_distance, Histogram, DEFAULT_BINS};
pub use metrics::{
    circularity, concentricity_offset, overall_quality, pupil_contrast, pupil_iris_ratio, ratio_tent,
    Components, CONTRAST_WINDOW,
};
pub use segment::{segment, Circle, SegmentConfig, Segmentation, BOUNDARY_POINTS};
pub use sharpness::{focus_power, reference_checkerboard, sharpness, sharpness_from_power, FOCUS_HALF_POWER};

use rayon::prelude::*;

use crate::image::GrayImage;

/// The six per-image quality scores.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub circularity: f64,
    pub pupil_contrast: f64,
    pub pupil_iris_ratio: f64,
    pub concentricity_offset: f64,
    pub sharpness: f64,
    pub overall: f64,
    /// `None` when segmentation failed; the geometric scores are then
    /// reported as their worst values and `overall` is 0.
    pub segmentation: Option<Segmentation>,
}

/// Names and natural ranges of the reported metrics, in report order.
pub const METRICS: [(&str, f64, f64); 6] = [
    ("circularity", 0.0, 1.0),
    ("pupil_contrast", 0.0, 1.0),
    ("pupil_iris_ratio", 0.0, 1.0),
    ("concentricity_offset", 0.0, 1.0),
    ("sharpness", 0.0, 100.0),
    ("overall", 0.0, 1.0),
];

impl QualityReport {
    /// Metric values in [`METRICS`] order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.circularity,
            self.pupil_contrast,
            self.pupil_iris_ratio,
            self.concentricity_offset,
            self.sharpness,
            self.overall,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityConfig {
    pub segment: SegmentConfig,
    /// Half-power constant of the focus score.
    pub focus_half_power: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            segment: SegmentConfig::default(),
            focus_half_power: FOCUS_HALF_POWER,
        }
    }
}

/// Scores an image against a known segmentation.
pub fn assess_with(img: &GrayImage, seg: &Segmentation, cfg: &QualityConfig) -> QualityReport {
    let sharp = sharpness_from_power(focus_power(img), cfg.focus_half_power);
    let contrast = pupil_contrast(img, seg);
    let circ = circularity(&seg.pupil_boundary);
    match (circ, contrast) {
        (Ok(circ), Ok(contrast)) => {
            let components = Components {
                circularity: circ,
                pupil_contrast: contrast,
                pupil_iris_ratio: pupil_iris_ratio(seg),
                concentricity_offset: concentricity_offset(seg),
                sharpness: sharp,
            };
            QualityReport {
                circularity: circ,
                pupil_contrast: contrast,
                pupil_iris_ratio: components.pupil_iris_ratio,
                concentricity_offset: components.concentricity_offset,
                sharpness: sharp,
                overall: overall_quality(&components),
                segmentation: Some(seg.clone()),
            }
        }
        _ => failed_report(sharp),
    }
}

fn failed_report(sharpness: f64) -> QualityReport {
    QualityReport {
        circularity: 0.0,
        pupil_contrast: 0.0,
        pupil_iris_ratio: 0.0,
        concentricity_offset: 1.0,
        sharpness,
        overall: 0.0,
        segmentation: None,
    }
}

/// Segments and scores an image. Segmentation failure yields `overall = 0`.
pub fn assess(img: &GrayImage, cfg: &QualityConfig) -> QualityReport {
    match segment(img, &cfg.segment) {
        Ok(seg) => assess_with(img, &seg, cfg),
        Err(_) => failed_report(sharpness_from_power(focus_power(img), cfg.focus_half_power)),
    }
}

/// Overall quality of one image with default settings.
pub fn quality_score(img: &GrayImage) -> f64 {
    assess(img, &QualityConfig::default()).overall
}

/// Scores a batch; the result order matches the input order.
pub fn assess_all(images: &[GrayImage], cfg: &QualityConfig) -> Vec<QualityReport> {
    images.par_iter().map(|img| assess(img, cfg)).collect()
}
