use crate::image::GrayImage;

/// Side of the focus kernel.
const KERNEL: usize = 8;

/// Half-power constant `c`: the mean squared kernel response at which the
/// focus score is 50. Set so that [`reference_checkerboard`] scores 95.
pub const FOCUS_HALF_POWER: f64 = 5.101_900_880_970_031;

/// Mean squared response of the 8×8 zero-sum high-pass kernel (−1 on the
/// border ring, +3 on the inner 4×4) over all valid placements. Returns 0
/// for images smaller than the kernel.
pub fn focus_power(img: &GrayImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    if w < KERNEL || h < KERNEL {
        return 0.0;
    }
    // Summed-area table with a zero first row and column.
    let stride = w + 1;
    let mut sat = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += img.get(x, y);
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
    let rect = |x: usize, y: usize, s: usize| {
        sat[(y + s) * stride + x + s] - sat[y * stride + x + s] - sat[(y + s) * stride + x] + sat[y * stride + x]
    };
    let mut total = 0.0;
    for y in 0..=h - KERNEL {
        for x in 0..=w - KERNEL {
            let r = 4.0 * rect(x + 2, y + 2, 4) - rect(x, y, KERNEL);
            total += r * r;
        }
    }
    total / ((w - KERNEL + 1) * (h - KERNEL + 1)) as f64
}

/// `100·s² / (s² + c²)`.
pub fn sharpness_from_power(power: f64, half_power: f64) -> f64 {
    let s2 = power * power;
    let c2 = half_power * half_power;
    if s2 + c2 == 0.0 {
        return 0.0;
    }
    100.0 * s2 / (s2 + c2)
}

pub fn sharpness(img: &GrayImage) -> f64 {
    sharpness_from_power(focus_power(img), FOCUS_HALF_POWER)
}

/// The calibration target: a 64×64 checkerboard of 4 px cells at
/// intensities 0.3 and 0.7.
pub fn reference_checkerboard() -> GrayImage {
    GrayImage::from_fn(64, 64, |x, y| if (x / 4 + y / 4) % 2 == 0 { 0.3 } else { 0.7 })
        .expect("64x64 is a valid extent")
}
