//! Single-channel floating point images.

use crate::error::{Error, Result};

/// Smallest accepted width or height.
pub const MIN_EXTENT: usize = 16;

/// Grayscale image with row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < MIN_EXTENT || height < MIN_EXTENT {
            return Err(Error::invalid(format!(
                "image {width}×{height} is smaller than {MIN_EXTENT}×{MIN_EXTENT}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "image {width}×{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "pixel {bad} has intensity {} outside [0, 1]",
                pixels[bad]
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Builds an image from `f(x, y)`, clamping each value into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(clamp01(f(x, y)));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![clamp01(value); width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a sub-pixel position; coordinates are clamped to
    /// the image so the border extends outward.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Separable Gaussian blur with edge replication. `sigma <= 0` copies.
    pub fn gaussian_blur(&self, sigma: f64) -> Self {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = vec![0.0; self.pixels.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let xx = (x + k as isize - radius).clamp(0, w - 1);
                    acc += kv * self.pixels[(y * w + xx) as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0.0; self.pixels.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let yy = (y + k as isize - radius).clamp(0, h - 1);
                    acc += kv * tmp[(yy * w + x) as usize];
                }
                out[(y * w + x) as usize] = clamp01(acc);
            }
        }
        Self {
            width: self.width,
            height: self.height,
            pixels: out,
        }
    }

    /// Rotation by 90° counter-clockwise as displayed (x right, y down).
    pub fn rot90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                // (x, y) -> (y, w-1-x)
                out[(w - 1 - x) * h + y] = self.get(x, y);
            }
        }
        Self {
            width: h,
            height: w,
            pixels: out,
        }
    }

    /// Rotation by `angle` radians about `(cx, cy)` with bilinear resampling.
    /// Positive angles turn features from +x toward +y.
    pub fn rotate(&self, angle: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut out = Vec::with_capacity(self.pixels.len());
        for y in 0..self.height {
            for x in 0..self.width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                // inverse rotation to find the source pixel
                let sx = c * dx + s * dy + cx;
                let sy = -s * dx + c * dy + cy;
                out.push(self.sample(sx, sy));
            }
        }
        Self {
            width: self.width,
            height: self.height,
            pixels: out,
        }
    }

    /// Integer translation; uncovered pixels take `fill`.
    pub fn shifted(&self, dx: isize, dy: isize, fill: f64) -> Self {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = vec![clamp01(fill); self.pixels.len()];
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = (x - dx, y - dy);
                if sx >= 0 && sx < w && sy >= 0 && sy < h {
                    out[(y * w + x) as usize] = self.pixels[(sy * w + sx) as usize];
                }
            }
        }
        Self {
            width: self.width,
            height: self.height,
            pixels: out,
        }
    }
}

#[inline]
pub(crate) fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
