//! Open iris matcher: rubber-sheet normalization, log-Gabor phase codes,
//! masked Hamming distance with rotation search, and the attack-evaluation
//! protocol built on it.

mod attack;

pub use attack::{
    attack_eval, pair_scores, score_sets, AttackReport, OperatingPoint, PairLabel, PairScore, Probe, ScoreSet, Unmatchable,
};

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::quality::{segment, Circle, SegmentConfig, Segmentation};

/// Radial samples of the normalized iris.
pub const RADIAL: usize = 32;
/// Angular samples of the normalized iris.
pub const ANGULAR: usize = 256;
/// Centre wavelength of the log-Gabor filter in angular samples.
pub const WAVELENGTH: f64 = 18.0;
/// Bandwidth ratio σ/f of the log-Gabor filter.
pub const SIGMA_ON_F: f64 = 0.55;
/// Filter responses weaker than this are masked out.
pub const MIN_AMPLITUDE: f64 = 1e-4;
/// Column rotations tried on each side when matching.
pub const MAX_SHIFT: isize = 8;
/// Fewest jointly valid cells for a comparison.
pub const MIN_OVERLAP: usize = 100;

const WORDS: usize = 2 * ANGULAR / 64;

/// Iris annulus unwrapped to `RADIAL × ANGULAR`, row 0 at the pupil.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    data: Vec<f64>,
}

impl PolarImage {
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(RADIAL * ANGULAR);
        for r in 0..RADIAL {
            for c in 0..ANGULAR {
                data.push(f(r, c));
            }
        }
        Self { data }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * ANGULAR + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * ANGULAR..(row + 1) * ANGULAR]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Rubber-sheet unwrapping. Cell `(i, j)` sits at normalized radius
/// `(i + ½)/RADIAL` and angle `2πj/ANGULAR`; centre and radius are
/// interpolated linearly from the pupil circle to the iris circle.
pub fn normalize(img: &GrayImage, seg: &Segmentation) -> PolarImage {
    let (p, q) = (seg.pupil, seg.iris);
    let trig: Vec<(f64, f64)> = (0..ANGULAR).map(|j| (2.0 * PI * j as f64 / ANGULAR as f64).sin_cos()).collect();
    PolarImage::from_fn(|i, j| {
        let rho = (i as f64 + 0.5) / RADIAL as f64;
        let cx = p.cx + rho * (q.cx - p.cx);
        let cy = p.cy + rho * (q.cy - p.cy);
        let r = p.r + rho * (q.r - p.r);
        let (s, c) = trig[j];
        img.sample(cx + r * c, cy + r * s)
    })
}

/// Two-bit phase code and validity mask over the polar grid.
///
/// Each row packs `ANGULAR` cells into 64-bit words, cell `j` owning bits
/// `2j` (real part sign) and `2j + 1` (imaginary part sign). Mask bits are
/// duplicated on both positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisTemplate {
    code: Vec<[u64; WORDS]>,
    mask: Vec<[u64; WORDS]>,
}

impl IrisTemplate {
    /// Builds a template from per-cell phase quadrants (`0..4`, bit 0 the
    /// real sign, bit 1 the imaginary sign) and validity flags, row-major.
    pub fn from_cells(quadrants: &[u8], valid: &[bool]) -> Result<Self> {
        let n = RADIAL * ANGULAR;
        if quadrants.len() != n || valid.len() != n {
            return Err(Error::invalid(format!(
                "template needs {n} cells, got {} codes and {} mask flags",
                quadrants.len(),
                valid.len()
            )));
        }
        if let Some(q) = quadrants.iter().find(|&&q| q > 3) {
            return Err(Error::invalid(format!("phase quadrant {q} outside 0..4")));
        }
        let mut code = vec![[0u64; WORDS]; RADIAL];
        let mut mask = vec![[0u64; WORDS]; RADIAL];
        for r in 0..RADIAL {
            for c in 0..ANGULAR {
                let k = r * ANGULAR + c;
                let (w, b) = ((2 * c) / 64, (2 * c) % 64);
                code[r][w] |= (quadrants[k] as u64 & 3) << b;
                if valid[k] {
                    mask[r][w] |= 3 << b;
                }
            }
        }
        Ok(Self { code, mask })
    }

    pub fn quadrant(&self, row: usize, col: usize) -> u8 {
        ((self.code[row][(2 * col) / 64] >> ((2 * col) % 64)) & 3) as u8
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        (self.mask[row][(2 * col) / 64] >> ((2 * col) % 64)) & 1 == 1
    }

    pub fn valid_cells(&self) -> usize {
        self.mask.iter().flatten().map(|w| w.count_ones() as usize).sum::<usize>() / 2
    }

    /// Every code bit flipped, mask unchanged.
    pub fn complement(&self) -> Self {
        Self {
            code: self.code.iter().map(|row| row.map(|w| !w)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// The template of the input rotated by `cols` angular samples.
    pub fn rotated(&self, cols: isize) -> Self {
        let bits = (2 * cols).rem_euclid(2 * ANGULAR as isize) as usize;
        // rotating by `cols` moves old column j to j + cols
        let back = (2 * ANGULAR - bits) % (2 * ANGULAR);
        Self {
            code: self.code.iter().map(|r| rotate_row(r, back)).collect(),
            mask: self.mask.iter().map(|r| rotate_row(r, back)).collect(),
        }
    }
}

/// Output bit `i` is input bit `(i + bits) mod 512`.
fn rotate_row(row: &[u64; WORDS], bits: usize) -> [u64; WORDS] {
    let (q, r) = (bits / 64, bits % 64);
    std::array::from_fn(|w| {
        let lo = row[(w + q) % WORDS] >> r;
        if r == 0 {
            lo
        } else {
            lo | (row[(w + q + 1) % WORDS] << (64 - r))
        }
    })
}

fn log_gabor() -> Vec<f64> {
    let f0 = 1.0 / WAVELENGTH;
    let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
    (0..ANGULAR)
        .map(|k| {
            // one-sided: positive frequencies only, no DC or Nyquist
            if k == 0 || k >= ANGULAR / 2 {
                0.0
            } else {
                let f = k as f64 / ANGULAR as f64;
                (-(f / f0).ln().powi(2) / denom).exp()
            }
        })
        .collect()
}

/// Row-wise log-Gabor filtering and phase quantization.
pub fn encode(polar: &PolarImage) -> IrisTemplate {
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(ANGULAR);
    let inv = planner.plan_fft_inverse(ANGULAR);
    let filter = log_gabor();
    let mut quadrants = Vec::with_capacity(RADIAL * ANGULAR);
    let mut valid = Vec::with_capacity(RADIAL * ANGULAR);
    let mut buf = vec![Complex::new(0.0, 0.0); ANGULAR];
    for r in 0..RADIAL {
        for (b, &v) in buf.iter_mut().zip(polar.row(r)) {
            *b = Complex::new(v, 0.0);
        }
        fwd.process(&mut buf);
        for (b, g) in buf.iter_mut().zip(&filter) {
            *b *= g;
        }
        inv.process(&mut buf);
        for z in &buf {
            let z = z / ANGULAR as f64;
            quadrants.push((z.re >= 0.0) as u8 | (((z.im >= 0.0) as u8) << 1));
            valid.push(z.norm() >= MIN_AMPLITUDE);
        }
    }
    IrisTemplate::from_cells(&quadrants, &valid).expect("extents are fixed")
}

/// Template of a segmented image.
pub fn template(img: &GrayImage, seg: &Segmentation) -> IrisTemplate {
    encode(&normalize(img, seg))
}

/// Circles assumed when segmentation fails: centred, with radii 0.15 and
/// 0.375 of the smaller image extent.
pub fn fallback_segmentation(width: usize, height: usize) -> Segmentation {
    let m = width.min(height) as f64;
    let (cx, cy) = ((width - 1) as f64 / 2.0, (height - 1) as f64 / 2.0);
    Segmentation::from_circles(Circle::new(cx, cy, 0.15 * m), Circle::new(cx, cy, 0.375 * m))
        .expect("nested concentric circles")
}

/// A template plus whether the fallback circles had to be used.
#[derive(Debug, Clone, PartialEq)]
pub struct Enrollment {
    pub template: IrisTemplate,
    pub fallback: bool,
}

/// Segments and encodes an image. Every image is enrolled; images that do
/// not segment use [`fallback_segmentation`].
pub fn enroll(img: &GrayImage, cfg: &SegmentConfig) -> Enrollment {
    match segment(img, cfg) {
        Ok(seg) => Enrollment { template: template(img, &seg), fallback: false },
        Err(_) => Enrollment {
            template: template(img, &fallback_segmentation(img.width(), img.height())),
            fallback: true,
        },
    }
}

/// Fractional Hamming distance between `a` and `b` rotated by `shift`
/// columns, over jointly valid cells. `None` below [`MIN_OVERLAP`] cells.
pub fn hamming_at(a: &IrisTemplate, b: &IrisTemplate, shift: isize) -> Option<f64> {
    let b = if shift == 0 { b.clone() } else { b.rotated(shift) };
    let (mut diff, mut bits) = (0u32, 0u32);
    for r in 0..RADIAL {
        for w in 0..WORDS {
            let m = a.mask[r][w] & b.mask[r][w];
            bits += m.count_ones();
            diff += ((a.code[r][w] ^ b.code[r][w]) & m).count_ones();
        }
    }
    (bits as usize / 2 >= MIN_OVERLAP).then(|| diff as f64 / bits as f64)
}

/// Smallest [`hamming_at`] over shifts `−MAX_SHIFT..=MAX_SHIFT`; `None` when
/// no shift leaves enough jointly valid cells.
pub fn match_templates(a: &IrisTemplate, b: &IrisTemplate) -> Option<f64> {
    (-MAX_SHIFT..=MAX_SHIFT)
        .filter_map(|k| hamming_at(a, b, k))
        .min_by(f64::total_cmp)
}

#[cfg(test)]
mod tests;
