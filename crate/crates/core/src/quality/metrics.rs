use std::f64::consts::PI;

use super::segment::Segmentation;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Radial window length, in pixels, on each side of the pupil boundary.
pub const CONTRAST_WINDOW: usize = 5;

/// `2·√(π·A) / P` of a closed polygon (area by the shoelace formula),
/// clamped to `[0, 1]`. Equals 1 for a circle.
pub fn circularity(boundary: &[(f64, f64)]) -> Result<f64> {
    if boundary.len() < 3 {
        return Err(Error::invalid("boundary needs at least 3 vertices"));
    }
    let n = boundary.len();
    let mut twice_area = 0.0;
    let mut perimeter = 0.0;
    for i in 0..n {
        let (x0, y0) = boundary[i];
        let (x1, y1) = boundary[(i + 1) % n];
        twice_area += x0 * y1 - x1 * y0;
        perimeter += (x1 - x0).hypot(y1 - y0);
    }
    let area = 0.5 * twice_area.abs();
    if area <= 1e-12 || perimeter <= 0.0 {
        return Err(Error::invalid("degenerate boundary with zero area"));
    }
    Ok((2.0 * (PI * area).sqrt() / perimeter).clamp(0.0, 1.0))
}

/// Mean of (outer − inner) window intensity at the left and right ends of
/// the pupil boundary, clamped to `[0, 1]`. The inner window is shortened
/// for pupils smaller than the window.
pub fn pupil_contrast(img: &GrayImage, seg: &Segmentation) -> Result<f64> {
    let p = seg.pupil;
    let inner_len = CONTRAST_WINDOW.min(p.r.floor().max(1.0) as usize);
    let (w, h) = (img.width() as f64, img.height() as f64);
    let reach = p.r + CONTRAST_WINDOW as f64;
    if p.cx - reach < 0.0 || p.cx + reach > w - 1.0 || p.cy < 0.0 || p.cy > h - 1.0 {
        return Err(Error::invalid("contrast window falls outside the image"));
    }
    let mut total = 0.0;
    for dir in [1.0, -1.0] {
        let outer: f64 = (1..=CONTRAST_WINDOW)
            .map(|k| img.sample(p.cx + dir * (p.r + k as f64), p.cy))
            .sum::<f64>()
            / CONTRAST_WINDOW as f64;
        let inner: f64 = (1..=inner_len)
            .map(|k| img.sample(p.cx + dir * (p.r - k as f64), p.cy))
            .sum::<f64>()
            / inner_len as f64;
        total += outer - inner;
    }
    Ok((total / 2.0).clamp(0.0, 1.0))
}

pub fn pupil_iris_ratio(seg: &Segmentation) -> f64 {
    seg.pupil.r / seg.iris.r
}

/// Centre distance divided by the iris radius, clamped to `[0, 1]`.
pub fn concentricity_offset(seg: &Segmentation) -> f64 {
    let d = (seg.pupil.cx - seg.iris.cx).hypot(seg.pupil.cy - seg.iris.cy);
    (d / seg.iris.r).clamp(0.0, 1.0)
}

/// Desirability of a pupil/iris ratio: 1 at 0.45, falling linearly to 0 at
/// 0.2 and 0.8.
pub fn ratio_tent(ratio: f64) -> f64 {
    if ratio <= 0.2 || ratio >= 0.8 {
        0.0
    } else if ratio <= 0.45 {
        (ratio - 0.2) / 0.25
    } else {
        (0.8 - ratio) / 0.35
    }
}

/// The five scores the overall quality is composed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub circularity: f64,
    pub pupil_contrast: f64,
    pub pupil_iris_ratio: f64,
    pub concentricity_offset: f64,
    /// On the `[0, 100]` focus scale.
    pub sharpness: f64,
}

/// Geometric mean of circularity, contrast, `1 − offset`, `sharpness/100`
/// and the ratio tent.
pub fn overall_quality(c: &Components) -> f64 {
    let terms = [
        c.circularity.clamp(0.0, 1.0),
        c.pupil_contrast.clamp(0.0, 1.0),
        (1.0 - c.concentricity_offset).clamp(0.0, 1.0),
        (c.sharpness / 100.0).clamp(0.0, 1.0),
        ratio_tent(c.pupil_iris_ratio),
    ];
    if terms.iter().any(|&t| t <= 0.0) {
        return 0.0;
    }
    (terms.iter().map(|t| t.ln()).sum::<f64>() / terms.len() as f64).exp()
}
