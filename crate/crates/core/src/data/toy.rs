//! Procedural eye images with known segmentation.
//!
//! The iris texture is defined on normalized rubber-sheet coordinates
//! (ρ from pupil to iris boundary, θ around the eye), so it stays attached
//! to the same tissue when the pupil dilates or moves off centre.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::quality::{Circle, Segmentation};

/// Number of sinusoids in an identity texture.
const TEXTURE_TERMS: usize = 14;

/// Intensity of the eyelid band.
const LID_LEVEL: f64 = 0.62;

/// Parameters of one synthetic eye image.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyIrisSpec {
    /// Seeds the iris texture.
    pub identity_seed: u64,
    /// Seeds the sensor noise.
    pub capture_seed: u64,
    /// Iris radius as a fraction of the image size.
    pub iris_radius_frac: f64,
    /// Pupil radius at `dilation = 1`, as a fraction of the image size.
    pub pupil_radius_frac: f64,
    /// Multiplies the pupil radius.
    pub dilation: f64,
    /// Pupil centre relative to the iris centre, in pixels.
    pub center_offset: (f64, f64),
    /// Iris centre relative to the image centre, in pixels.
    pub iris_center_shift: (f64, f64),
    /// Rotation of the texture about the eye, radians.
    pub rotation: f64,
    pub blur_sigma: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise_amplitude: f64,
    /// Fraction of the iris diameter covered by the upper lid, from the top.
    pub occlusion: f64,
    pub pupil_level: f64,
    pub iris_level: f64,
    pub sclera_level: f64,
    /// Standard deviation of the texture around `iris_level`.
    pub texture_amplitude: f64,
}

impl Default for ToyIrisSpec {
    fn default() -> Self {
        Self {
            identity_seed: 0,
            capture_seed: 0,
            iris_radius_frac: 0.375,
            pupil_radius_frac: 0.16,
            dilation: 1.0,
            center_offset: (0.0, 0.0),
            iris_center_shift: (0.0, 0.0),
            rotation: 0.0,
            blur_sigma: 0.0,
            noise_amplitude: 0.0,
            occlusion: 0.0,
            pupil_level: 0.08,
            iris_level: 0.45,
            sclera_level: 0.78,
            texture_amplitude: 0.12,
        }
    }
}

impl ToyIrisSpec {
    /// Ground-truth circles for a `size × size` image.
    pub fn circles(&self, size: usize) -> (Circle, Circle) {
        let s = size as f64;
        let c = (s - 1.0) / 2.0;
        let (ix, iy) = (c + self.iris_center_shift.0, c + self.iris_center_shift.1);
        let iris = Circle::new(ix, iy, self.iris_radius_frac * s);
        let pupil = Circle::new(
            ix + self.center_offset.0,
            iy + self.center_offset.1,
            self.pupil_radius_frac * self.dilation * s,
        );
        (pupil, iris)
    }

    /// Pupil-to-iris radius ratio implied by the spec.
    pub fn pupil_iris_ratio(&self) -> f64 {
        self.pupil_radius_frac * self.dilation / self.iris_radius_frac
    }

    fn validate(&self, size: usize) -> Result<Segmentation> {
        let finite = [
            self.iris_radius_frac,
            self.pupil_radius_frac,
            self.dilation,
            self.center_offset.0,
            self.center_offset.1,
            self.iris_center_shift.0,
            self.iris_center_shift.1,
            self.rotation,
            self.blur_sigma,
            self.noise_amplitude,
            self.occlusion,
            self.texture_amplitude,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("toy iris spec has non-finite fields"));
        }
        if self.blur_sigma < 0.0 || self.noise_amplitude < 0.0 || self.texture_amplitude < 0.0 {
            return Err(Error::invalid("blur, noise and texture amplitude must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.occlusion) {
            return Err(Error::invalid(format!("occlusion {} outside [0, 1]", self.occlusion)));
        }
        for (name, v) in [
            ("pupil_level", self.pupil_level),
            ("iris_level", self.iris_level),
            ("sclera_level", self.sclera_level),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        let (pupil, iris) = self.circles(size);
        let seg = Segmentation::from_circles(pupil, iris)?;
        seg.check_bounds(size, size)?;
        Ok(seg)
    }
}

/// Identity texture: a seeded mixture of sinusoids in (ρ, θ).
#[derive(Debug, Clone)]
pub struct IrisTexture {
    terms: Vec<(f64, f64, f64, f64)>,
    norm: f64,
}

impl IrisTexture {
    pub fn new(identity_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(identity_seed ^ 0x1d_c9a4_7e5a);
        let terms: Vec<_> = (0..TEXTURE_TERMS)
            .map(|_| {
                let amp = rng.random_range(0.5..1.0);
                let angular = rng.random_range(4..=28) as f64;
                let radial = rng.random_range(0.0..2.5) * 2.0 * PI;
                let phase = rng.random_range(0.0..2.0 * PI);
                (amp, angular, radial, phase)
            })
            .collect();
        let norm = (terms.iter().map(|t| t.0 * t.0).sum::<f64>() / 2.0).sqrt();
        Self { terms, norm }
    }

    /// Zero-mean, unit-variance pattern value at normalized radius `rho`
    /// and angle `theta`.
    pub fn value(&self, rho: f64, theta: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, f, g, p)| a * (f * theta + g * rho + p).cos())
            .sum::<f64>()
            / self.norm
    }
}

/// Normalized (ρ, θ) of a point for the rubber sheet between two circles:
/// the point equals `C(ρ) + R(ρ)·(cos θ, sin θ)` with centre and radius
/// interpolated linearly from pupil (ρ = 0) to iris (ρ = 1).
pub fn rubber_sheet_coords(pupil: &Circle, iris: &Circle, x: f64, y: f64) -> (f64, f64) {
    let dr = iris.r - pupil.r;
    let mut rho = ((x - pupil.cx).hypot(y - pupil.cy) - pupil.r) / dr;
    for _ in 0..8 {
        let cx = pupil.cx + rho * (iris.cx - pupil.cx);
        let cy = pupil.cy + rho * (iris.cy - pupil.cy);
        rho = ((x - cx).hypot(y - cy) - pupil.r) / dr;
    }
    let cx = pupil.cx + rho * (iris.cx - pupil.cx);
    let cy = pupil.cy + rho * (iris.cy - pupil.cy);
    (rho, (y - cy).atan2(x - cx))
}

/// Renders a `size × size` eye image and returns it with its ground truth.
pub fn toy_iris(spec: &ToyIrisSpec, size: usize) -> Result<(GrayImage, Segmentation)> {
    let seg = spec.validate(size)?;
    let (pupil, iris) = (seg.pupil, seg.iris);
    let texture = IrisTexture::new(spec.identity_seed);
    let clean = GrayImage::from_fn(size, size, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        // one-pixel linear ramps give anti-aliased edges
        let in_pupil = (0.5 - ((xf - pupil.cx).hypot(yf - pupil.cy) - pupil.r)).clamp(0.0, 1.0);
        let in_iris = (0.5 - ((xf - iris.cx).hypot(yf - iris.cy) - iris.r)).clamp(0.0, 1.0);
        let tissue = if in_iris > 0.0 && in_pupil < 1.0 {
            let (rho, theta) = rubber_sheet_coords(&pupil, &iris, xf, yf);
            spec.iris_level + spec.texture_amplitude * texture.value(rho.clamp(0.0, 1.0), theta - spec.rotation)
        } else {
            spec.iris_level
        };
        let outer = in_iris * tissue + (1.0 - in_iris) * spec.sclera_level;
        in_pupil * spec.pupil_level + (1.0 - in_pupil) * outer
    })?;

    let blurred = if spec.blur_sigma > 0.0 {
        clean.gaussian_blur(spec.blur_sigma)
    } else {
        clean
    };

    let mut px = blurred.into_pixels();
    if spec.noise_amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.capture_seed);
        let normal = Normal::new(0.0, spec.noise_amplitude).map_err(|e| Error::invalid(e.to_string()))?;
        px.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    if spec.occlusion > 0.0 {
        let edge = iris.cy - iris.r + 2.0 * iris.r * spec.occlusion;
        for y in 0..size {
            let cover = (edge - y as f64 + 0.5).clamp(0.0, 1.0);
            if cover > 0.0 {
                for v in &mut px[y * size..(y + 1) * size] {
                    *v = cover * LID_LEVEL + (1.0 - cover) * *v;
                }
            }
        }
    }
    px.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok((GrayImage::new(size, size, px)?, seg))
}

/// Uniform sampling ranges for random toy specs.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyRanges {
    pub iris_radius_frac: (f64, f64),
    /// Pupil-to-iris radius ratio.
    pub ratio: (f64, f64),
    /// Pupil offset magnitude as a fraction of the iris radius.
    pub offset_frac: (f64, f64),
    /// Iris centre shift per axis as a fraction of the image size.
    pub shift_frac: f64,
    pub blur_sigma: (f64, f64),
    pub noise_amplitude: (f64, f64),
    pub occlusion: (f64, f64),
}

impl Default for ToyRanges {
    fn default() -> Self {
        Self {
            iris_radius_frac: (0.3, 0.4),
            ratio: (0.3, 0.6),
            offset_frac: (0.0, 0.08),
            shift_frac: 0.05,
            blur_sigma: (0.0, 1.0),
            noise_amplitude: (0.0, 0.02),
            occlusion: (0.0, 0.15),
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl ToyRanges {
    /// Clean captures: no blur, noise or occlusion.
    pub fn clean() -> Self {
        Self {
            blur_sigma: (0.0, 0.0),
            noise_amplitude: (0.0, 0.0),
            occlusion: (0.0, 0.0),
            ..Self::default()
        }
    }

    /// Draws a spec for `identity_seed`; geometry, degradations and the
    /// capture seed come from `rng`.
    pub fn sample(&self, identity_seed: u64, size: usize, rng: &mut impl Rng) -> ToyIrisSpec {
        let s = size as f64;
        let iris_frac = uniform(rng, self.iris_radius_frac);
        let ratio = uniform(rng, self.ratio);
        let off = uniform(rng, self.offset_frac) * iris_frac * s;
        let ang = rng.random_range(0.0..2.0 * PI);
        let shift = self.shift_frac * s;
        let shift_x = if shift > 0.0 { rng.random_range(-shift..shift) } else { 0.0 };
        let shift_y = if shift > 0.0 { rng.random_range(-shift..shift) } else { 0.0 };
        ToyIrisSpec {
            identity_seed,
            capture_seed: rng.random(),
            iris_radius_frac: iris_frac,
            pupil_radius_frac: ratio * iris_frac,
            dilation: 1.0,
            center_offset: (off * ang.cos(), off * ang.sin()),
            iris_center_shift: (shift_x, shift_y),
            rotation: rng.random_range(-0.05..0.05),
            blur_sigma: uniform(rng, self.blur_sigma),
            noise_amplitude: uniform(rng, self.noise_amplitude),
            occlusion: uniform(rng, self.occlusion),
            ..ToyIrisSpec::default()
        }
    }
}

/// One rendered toy image with its labels.
#[derive(Debug, Clone)]
pub struct ToySample {
    pub image: GrayImage,
    pub segmentation: Segmentation,
    pub identity: u64,
    pub spec: ToyIrisSpec,
}

/// `n` images cycling over `identities` identities, deterministic in `seed`.
pub fn toy_pool(n: usize, identities: usize, size: usize, ranges: &ToyRanges, seed: u64) -> Result<Vec<ToySample>> {
    if identities == 0 {
        return Err(Error::invalid("need at least one identity"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<ToyIrisSpec> = (0..n)
        .map(|i| {
            let identity = (i % identities) as u64;
            ranges.sample(seed.wrapping_mul(0x9e37_79b9).wrapping_add(identity), size, &mut rng)
        })
        .collect();
    specs
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            let (image, segmentation) = toy_iris(&spec, size)?;
            Ok(ToySample {
                image,
                segmentation,
                identity: (i % identities) as u64,
                spec,
            })
        })
        .collect()
}

/// Print-and-recapture style attack: contrast compression toward mid-grey,
/// a periodic halftone pattern, defocus and sensor noise.
pub fn print_attack(img: &GrayImage, rng: &mut impl Rng) -> GrayImage {
    let squash = rng.random_range(0.55..0.75);
    let period = rng.random_range(3.0..5.0);
    let depth = rng.random_range(0.04..0.08);
    let phase = rng.random_range(0.0..2.0 * PI);
    let sigma = rng.random_range(0.6..1.2);
    let noise = Normal::new(0.0, rng.random_range(0.01..0.03)).expect("positive sigma");
    let halftoned = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let v = 0.5 + squash * (img.get(x, y) - 0.5);
        let dots = (2.0 * PI * x as f64 / period + phase).cos() * (2.0 * PI * y as f64 / period).cos();
        v + depth * dots
    })
    .expect("same extent as a valid image");
    let mut px = halftoned.gaussian_blur(sigma).into_pixels();
    px.iter_mut().for_each(|v| *v = (*v + noise.sample(rng)).clamp(0.0, 1.0));
    GrayImage::new(img.width(), img.height(), px).expect("same extent as a valid image")
}
