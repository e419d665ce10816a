//! Coarse-to-fine integro-differential circle search.
//!
//! For a candidate centre the mean intensity along concentric circles is
//! differentiated in radius and smoothed; the boundary is the centre/radius
//! maximizing that blurred radial derivative. The pupil is found first over
//! full circles; the iris is then searched around the pupil centre using
//! only the lateral arcs, which eyelids rarely cover.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    fn inside_image(&self, width: usize, height: usize) -> bool {
        let tol = 0.5;
        self.cx - self.r >= -tol
            && self.cy - self.r >= -tol
            && self.cx + self.r <= (width - 1) as f64 + tol
            && self.cy + self.r <= (height - 1) as f64 + tol
    }

    /// Regular polygon with `n` vertices on this circle.
    pub fn polygon(&self, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                (self.cx + self.r * t.cos(), self.cy + self.r * t.sin())
            })
            .collect()
    }
}

/// Pupil and iris circles of one eye image plus the traced pupil outline.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub pupil: Circle,
    pub iris: Circle,
    /// Closed pupil boundary, one vertex per sampled angle.
    pub pupil_boundary: Vec<(f64, f64)>,
}

pub const BOUNDARY_POINTS: usize = 64;

impl Segmentation {
    /// Segmentation from two circles; the pupil outline is the 64-gon on the
    /// pupil circle.
    pub fn from_circles(pupil: Circle, iris: Circle) -> Result<Self> {
        if !(pupil.r > 0.0 && pupil.r < iris.r) {
            return Err(Error::invalid(format!(
                "need 0 < pupil radius ({}) < iris radius ({})",
                pupil.r, iris.r
            )));
        }
        let d = (pupil.cx - iris.cx).hypot(pupil.cy - iris.cy);
        if d + pupil.r > iris.r + 1e-9 {
            return Err(Error::invalid("pupil circle extends outside the iris circle"));
        }
        Ok(Self {
            pupil,
            iris,
            pupil_boundary: pupil.polygon(BOUNDARY_POINTS),
        })
    }

    /// Checks that both circles lie within a `width × height` frame.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        if self.pupil.inside_image(width, height) && self.iris.inside_image(width, height) {
            Ok(())
        } else {
            Err(Error::invalid("segmentation circles leave the image"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentConfig {
    /// Pupil radius search range as fractions of `min(width, height)`.
    pub pupil_radius: (f64, f64),
    /// Iris radius search range as multiples of the pupil radius.
    pub iris_ratio: (f64, f64),
    /// Minimum blurred radial derivative (intensity per pixel) for a boundary.
    pub min_edge: f64,
    /// Gaussian pre-smoothing, in pixels per 64 px of image extent.
    pub smoothing: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            pupil_radius: (0.06, 0.25),
            iris_ratio: (1.5, 4.0),
            min_edge: 0.02,
            smoothing: 1.0,
        }
    }
}

/// Angular sample set for a circle of radius `r`, `density` samples per
/// pixel of circumference.
fn angles(r: f64, lateral_only: bool, density: f64) -> Vec<(f64, f64)> {
    let n = ((density * 2.0 * PI * r).round() as usize).clamp(16, 96);
    (0..n)
        .filter_map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            let c = t.cos();
            // lateral arcs: within 45° of the horizontal axis
            (!lateral_only || c.abs() >= std::f64::consts::FRAC_1_SQRT_2).then(|| (c, t.sin()))
        })
        .collect()
}

struct Profile {
    radii: Vec<f64>,
    dirs: Vec<Vec<(f64, f64)>>,
    step: f64,
}

impl Profile {
    fn new(r_lo: f64, r_hi: f64, step: f64, lateral_only: bool, density: f64) -> Self {
        // two guard samples on each side for the derivative and smoothing
        let n = ((r_hi - r_lo) / step).ceil() as usize + 1;
        let radii: Vec<f64> = (0..n + 4).map(|k| r_lo + (k as f64 - 2.0) * step).collect();
        let dirs = radii.iter().map(|&r| angles(r.max(1.0), lateral_only, density)).collect();
        Self { radii, dirs, step }
    }

    /// Best (blurred derivative, radius) for a centre, over radii in the
    /// interior of the profile within `[r_min, r_max]`.
    fn best(&self, img: &GrayImage, cx: f64, cy: f64, (r_min, r_max): (f64, f64)) -> (f64, f64) {
        let means: Vec<f64> = self
            .radii
            .iter()
            .zip(&self.dirs)
            .map(|(&r, dirs)| {
                let r = r.max(0.0);
                dirs.iter().map(|&(c, s)| img.sample(cx + r * c, cy + r * s)).sum::<f64>() / dirs.len() as f64
            })
            .collect();
        let n = means.len();
        let mut deriv = vec![0.0; n];
        for k in 1..n - 1 {
            deriv[k] = (means[k + 1] - means[k - 1]) / (2.0 * self.step);
        }
        let mut best = (f64::NEG_INFINITY, self.radii[2]);
        for k in 2..n - 2 {
            if self.radii[k] > r_max {
                break;
            }
            if self.radii[k] < r_min {
                continue;
            }
            let v = (deriv[k - 1] + 2.0 * deriv[k] + deriv[k + 1]) / 4.0;
            if v > best.0 {
                best = (v, self.radii[k]);
            }
        }
        best
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    circle: Circle,
}

/// The `keep` best candidates over a centre grid, best first.
fn grid_search(
    img: &GrayImage,
    x_range: (f64, f64),
    y_range: (f64, f64),
    step: f64,
    profile: &Profile,
    radius_bounds: impl Fn(f64, f64) -> (f64, f64),
    keep: usize,
) -> Vec<Candidate> {
    let mut found: Vec<Candidate> = Vec::new();
    let nx = ((x_range.1 - x_range.0) / step).floor().max(0.0) as usize + 1;
    let ny = ((y_range.1 - y_range.0) / step).floor().max(0.0) as usize + 1;
    for iy in 0..ny {
        let cy = y_range.0 + iy as f64 * step;
        for ix in 0..nx {
            let cx = x_range.0 + ix as f64 * step;
            let (score, r) = profile.best(img, cx, cy, radius_bounds(cx, cy));
            found.push(Candidate { score, circle: Circle::new(cx, cy, r) });
        }
    }
    // stable sort keeps scan order among ties
    found.sort_by(|a, b| b.score.total_cmp(&a.score));
    found.truncate(keep);
    found
}

/// Refines each seed on a finer centre grid of half-width `reach`; returns
/// the overall best.
fn refine(
    img: &GrayImage,
    seeds: &[Candidate],
    reach: f64,
    step: f64,
    profile: &Profile,
    radius_bounds: impl Fn(f64, f64) -> (f64, f64) + Copy,
) -> Option<Candidate> {
    seeds
        .iter()
        .filter_map(|c| {
            let (x, y) = (c.circle.cx, c.circle.cy);
            grid_search(img, (x - reach, x + reach), (y - reach, y + reach), step, profile, radius_bounds, 1)
                .into_iter()
                .next()
        })
        .fold(None, |best: Option<Candidate>, c| match best {
            Some(b) if b.score >= c.score => Some(b),
            _ => Some(c),
        })
}

/// Locates pupil and iris circles.
pub fn segment(img: &GrayImage, cfg: &SegmentConfig) -> Result<Segmentation> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let m = w.min(h);
    let sm = img.gaussian_blur(cfg.smoothing * (m / 64.0).max(0.75));

    // pupil: full circles, centres in the central part of the frame
    let (rp_lo, rp_hi) = (cfg.pupil_radius.0 * m, cfg.pupil_radius.1 * m);
    let coarse = (m / 32.0).round().max(2.0);
    let xr = ((0.2 * w).max(rp_lo), (0.8 * w).min(w - 1.0 - rp_lo));
    let yr = ((0.2 * h).max(rp_lo), (0.8 * h).min(h - 1.0 - rp_lo));
    let pupil_max = |_: f64, _: f64| (0.0, rp_hi);
    let seeds = grid_search(&sm, xr, yr, coarse, &Profile::new(rp_lo, rp_hi, 1.0, false, 0.5), pupil_max, 3);
    let mid = refine(&sm, &seeds, coarse / 2.0, 1.0, &Profile::new(rp_lo, rp_hi, 0.5, false, 0.75), pupil_max)
        .ok_or_else(|| Error::SegmentationFailed("no pupil candidates".into()))?;
    let pupil = refine(&sm, &[mid], 0.5, 0.5, &Profile::new(rp_lo, rp_hi, 0.25, false, 1.0), pupil_max)
        .unwrap_or(mid);
    if pupil.score < cfg.min_edge {
        return Err(Error::SegmentationFailed(format!(
            "no pupil boundary (best edge {:.4} < {})",
            pupil.score, cfg.min_edge
        )));
    }
    let pupil = pupil.circle;

    // iris: lateral arcs, centre near the pupil centre
    let ri_lo = (cfg.iris_ratio.0 * pupil.r).max(pupil.r + 3.0);
    let ri_hi = cfg.iris_ratio.1 * pupil.r;
    let window = (0.5 * pupil.r).max(2.0);
    // the circle must fit in the frame and clear the pupil edge, so a
    // lateral arc cannot lock onto the pupil boundary
    let fits = |cx: f64, cy: f64| {
        let room = cx.min(w - 1.0 - cx).min(cy).min(h - 1.0 - cy) + 0.5;
        let clear = (cx - pupil.cx).hypot(cy - pupil.cy) + pupil.r + 3.0;
        (clear, room.min(ri_hi))
    };
    if fits(pupil.cx, pupil.cy).1 < ri_lo {
        return Err(Error::SegmentationFailed("no room for an iris around the pupil".into()));
    }
    let seeds = grid_search(
        &sm,
        (pupil.cx - window, pupil.cx + window),
        (pupil.cy - window, pupil.cy + window),
        1.0,
        &Profile::new(ri_lo, ri_hi, 0.5, true, 1.0),
        fits,
        2,
    );
    let iris = refine(&sm, &seeds, 1.0, 0.5, &Profile::new(ri_lo, ri_hi, 0.25, true, 1.0), fits)
        .ok_or_else(|| Error::SegmentationFailed("no iris candidates".into()))?;
    if iris.score < cfg.min_edge {
        return Err(Error::SegmentationFailed(format!(
            "no iris boundary (best edge {:.4} < {})",
            iris.score, cfg.min_edge
        )));
    }
    let iris = iris.circle;

    let d = (pupil.cx - iris.cx).hypot(pupil.cy - iris.cy);
    if d + pupil.r > iris.r || !(pupil.r < iris.r) {
        return Err(Error::SegmentationFailed("pupil not contained in iris".into()));
    }
    let mut seg = Segmentation::from_circles(pupil, iris)?;
    seg.check_bounds(img.width(), img.height())
        .map_err(|e| Error::SegmentationFailed(e.to_string()))?;
    seg.pupil_boundary = trace_boundary(&sm, &pupil, BOUNDARY_POINTS);
    Ok(seg)
}

/// Per-angle edge positions of the pupil: strongest outward intensity rise
/// along each ray within ±40 % of the fitted radius, sub-pixel by parabolic
/// fit, then lightly smoothed around the contour.
fn trace_boundary(img: &GrayImage, pupil: &Circle, n: usize) -> Vec<(f64, f64)> {
    let step = 0.25;
    let (lo, hi) = (0.6 * pupil.r, 1.4 * pupil.r);
    let count = ((hi - lo) / step).ceil() as usize + 1;
    let mut radii = Vec::with_capacity(n);
    for k in 0..n {
        let t = 2.0 * PI * k as f64 / n as f64;
        let (c, s) = (t.cos(), t.sin());
        let vals: Vec<f64> = (0..count + 2)
            .map(|i| {
                let r = lo + (i as f64 - 1.0) * step;
                img.sample(pupil.cx + r * c, pupil.cy + r * s)
            })
            .collect();
        let deriv: Vec<f64> = (1..=count).map(|i| (vals[i + 1] - vals[i - 1]) / (2.0 * step)).collect();
        let (mut bi, mut bv) = (0usize, f64::NEG_INFINITY);
        for (i, &d) in deriv.iter().enumerate() {
            if d > bv {
                bv = d;
                bi = i;
            }
        }
        let mut r = lo + bi as f64 * step;
        if bi > 0 && bi + 1 < deriv.len() {
            let (a, b, cc) = (deriv[bi - 1], deriv[bi], deriv[bi + 1]);
            let denom = a - 2.0 * b + cc;
            if denom.abs() > 1e-12 {
                r += step * (0.5 * (a - cc) / denom).clamp(-0.5, 0.5);
            }
        }
        radii.push(r);
    }
    (0..n)
        .map(|k| {
            let r = 0.25 * radii[(k + n - 1) % n] + 0.5 * radii[k] + 0.25 * radii[(k + 1) % n];
            let t = 2.0 * PI * k as f64 / n as f64;
            (pupil.cx + r * t.cos(), pupil.cy + r * t.sin())
        })
        .collect()
}
