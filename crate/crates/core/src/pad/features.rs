//! Texture features: Zernike moment magnitudes over the iris disk and a
//! variance-weighted rotation-invariant LBP histogram.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::matcher::fallback_segmentation;
use crate::quality::{segment, Circle, SegmentConfig};

pub const ZERNIKE_ORDER: usize = 10;
pub const LBP_BINS: usize = 10;
/// 36 Zernike magnitudes followed by the 10 LBPV bins.
pub const FEATURE_LEN: usize = zernike_count(ZERNIKE_ORDER) + LBP_BINS;

const RADIAL_NODES: usize = 24;
const ANGULAR_NODES: usize = 96;

/// Number of `(n, m)` with `0 ≤ m ≤ n ≤ n_max` and `n − m` even.
pub const fn zernike_count(n_max: usize) -> usize {
    (n_max / 2 + 1) * (n_max - n_max / 2 + 1)
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                // P_n and its derivative by the three-term recurrence
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            ((1.0 - x) / 2.0, w / 2.0)
        })
        .collect()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Zernike radial polynomial `R_n^m(ρ)`, `m ≤ n`, `n − m` even.
pub fn radial_polynomial(n: usize, m: usize, rho: f64) -> f64 {
    (0..=(n - m) / 2)
        .map(|s| {
            let c = factorial(n - s) / (factorial(s) * factorial((n + m) / 2 - s) * factorial((n - m) / 2 - s));
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            sign * c * rho.powi((n - 2 * s) as i32)
        })
        .sum()
}

/// `|Z_nm|` over the disk `disk`, ordered by `n` then `m` (`m ≥ 0` only;
/// `|Z_{n,−m}| = |Z_nm|` for real images).
///
/// The disk integral uses Gauss–Legendre nodes in radius and uniform
/// angles with bilinear image samples.
pub fn zernike(img: &GrayImage, disk: &Circle, n_max: i32) -> Result<Vec<f64>> {
    if n_max < 0 {
        return Err(Error::invalid(format!("Zernike order {n_max} < 0")));
    }
    if !(disk.r > 0.0) {
        return Err(Error::invalid(format!("disk radius {} must be positive", disk.r)));
    }
    let n_max = n_max as usize;
    let nodes = gauss_legendre(RADIAL_NODES);
    let dtheta = 2.0 * PI / ANGULAR_NODES as f64;
    // angular Fourier coefficients of each ring: ring[i][m] = Σ_j I e^{−imθ_j} Δθ
    let rings: Vec<Vec<(f64, f64)>> = nodes
        .iter()
        .map(|&(rho, _)| {
            let vals: Vec<(f64, f64)> = (0..ANGULAR_NODES)
                .map(|j| {
                    let t = j as f64 * dtheta;
                    (t, img.sample(disk.cx + disk.r * rho * t.cos(), disk.cy + disk.r * rho * t.sin()))
                })
                .collect();
            (0..=n_max)
                .map(|m| {
                    vals.iter().fold((0.0, 0.0), |(re, im), &(t, v)| {
                        let a = m as f64 * t;
                        (re + v * a.cos() * dtheta, im - v * a.sin() * dtheta)
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(zernike_count(n_max));
    for n in 0..=n_max {
        for m in (n % 2..=n).step_by(2) {
            let (mut re, mut im) = (0.0, 0.0);
            for (&(rho, w), ring) in nodes.iter().zip(&rings) {
                let k = w * rho * radial_polynomial(n, m, rho);
                re += k * ring[m].0;
                im += k * ring[m].1;
            }
            out.push((n + 1) as f64 / PI * re.hypot(im));
        }
    }
    Ok(out)
}

/// Rotation-invariant uniform code of an 8-bit circular pattern: the
/// number of set bits when there are at most two 0/1 transitions, else 9.
pub fn riu2(pattern: u8) -> usize {
    if (pattern ^ pattern.rotate_left(1)).count_ones() <= 2 {
        pattern.count_ones() as usize
    } else {
        9
    }
}

/// Variance-weighted histogram of riu2 LBP codes over the eight
/// neighbours at unit chessboard distance, for every interior pixel.
/// Normalized to sum 1, or all zero when the image has no local variance.
pub fn lbpv(img: &GrayImage) -> [f64; LBP_BINS] {
    const RING: [(isize, isize); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut hist = [0.0; LBP_BINS];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = img.get(x as usize, y as usize);
            let g = RING.map(|(dx, dy)| img.get((x + dx) as usize, (y + dy) as usize));
            // pairwise form of the variance: exactly zero on flat patches
            let var = g.iter().flat_map(|a| g.iter().map(move |b| (a - b).powi(2))).sum::<f64>() / 128.0;
            let pattern = g.iter().enumerate().fold(0u8, |p, (k, &v)| p | (((v >= c) as u8) << k));
            hist[riu2(pattern)] += var;
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    }
    hist
}

/// Zernike magnitudes on the iris disk followed by the LBPV histogram.
/// Images that do not segment use the centred fallback disk.
pub fn features(img: &GrayImage, cfg: &SegmentConfig) -> Vec<f64> {
    let iris = segment(img, cfg)
        .map(|s| s.iris)
        .unwrap_or_else(|_| fallback_segmentation(img.width(), img.height()).iris);
    let mut f = zernike(img, &iris, ZERNIKE_ORDER as i32).expect("valid order and radius");
    f.extend(lbpv(img));
    f
}
