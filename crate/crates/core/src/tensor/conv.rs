//! Strided 2-D convolution and its transpose over NCHW batches, lowered to
//! GEMM through im2col / col2im.

use super::gemm::gemm;
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Spatial extent after a convolution: `floor((h + 2p − k)/s) + 1`.
pub fn conv_output_extent(h: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = h + 2 * padding;
    (stride >= 1 && padded >= k).then(|| (padded - k) / stride + 1)
}

/// Spatial extent after a transposed convolution: `(h − 1)s − 2p + k + op`.
pub fn conv_transpose_output_extent(
    h: usize,
    k: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    if stride == 0 || h == 0 {
        return None;
    }
    ((h - 1) * stride + k + output_padding).checked_sub(2 * padding).filter(|&v| v > 0)
}

#[derive(Clone, Copy)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }
    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds one `C×H×W` image into a `(C·K·K) × (OH·OW)` patch matrix.
fn im2col<T: Real>(img: &[T], g: Geometry, cols: &mut [T]) {
    let ncol = g.col_cols();
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * ncol..(row + 1) * ncol];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix >= 0 && ix < g.w as isize { src[ix as usize] } else { T::zero() };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch columns back, summing overlaps.
fn col2im<T: Real>(cols: &[T], g: Geometry, img: &mut [T]) {
    let ncol = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * ncol..(row + 1) * ncol];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_rank4<T: Real>(op: &'static str, input: &Tensor<T>, weight: &Tensor<T>) -> Result<()> {
    if input.shape().len() != 4 || weight.shape().len() != 4 || weight.shape()[2] != weight.shape()[3] {
        return Err(Error::ShapeMismatch {
            op,
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    Ok(())
}

fn bias_grad<T: Real>(g: &[T], n: usize, c: usize, plane: usize) -> Vec<T> {
    let mut db = vec![T::zero(); c];
    for s in 0..n {
        for (ch, d) in db.iter_mut().enumerate() {
            let off = (s * c + ch) * plane;
            *d = *d + g[off..off + plane].iter().copied().sum::<T>();
        }
    }
    db
}

/// 2-D convolution. `input: [N, C, H, W]`, `weight: [O, C, K, K]`, `bias: [O]`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    check_rank4("conv2d", input, weight)?;
    let &[n, c, h, w] = input.shape() else { unreachable!() };
    let &[o, wc, k, _] = weight.shape() else { unreachable!() };
    if wc != c || bias.shape() != [o] {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d stride must be >= 1"));
    }
    let (Some(oh), Some(ow)) = (
        conv_output_extent(h, k, stride, padding),
        conv_output_extent(w, k, stride, padding),
    ) else {
        return Err(Error::ShapeMismatch {
            op: "conv2d (kernel larger than padded input)",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    };
    let geo = Geometry { channels: c, h, w, k, stride, pad: padding, oh, ow };
    let (rows, cols_n) = (geo.col_rows(), geo.col_cols());

    let mut out = vec![T::zero(); n * o * oh * ow];
    {
        let x = input.data();
        let wt = weight.data();
        let b = bias.data();
        let mut cols = vec![T::zero(); rows * cols_n];
        for s in 0..n {
            im2col(&x[s * c * h * w..(s + 1) * c * h * w], geo, &mut cols);
            let dst = &mut out[s * o * cols_n..(s + 1) * o * cols_n];
            for (ch, plane) in dst.chunks_mut(cols_n).enumerate() {
                plane.fill(b[ch]);
            }
            gemm(false, false, o, cols_n, rows, &wt, &cols, T::one(), dst);
        }
    }

    Ok(Tensor::from_op(
        vec![n, o, oh, ow],
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        move |g, p| {
            let need_x = p[0].requires_grad();
            let need_w = p[1].requires_grad();
            let x = p[0].data();
            let wt = p[1].data();
            let mut dx = need_x.then(|| vec![T::zero(); n * c * h * w]);
            let mut dw = need_w.then(|| vec![T::zero(); o * rows]);
            let mut cols = vec![T::zero(); rows * cols_n];
            for s in 0..n {
                let gs = &g[s * o * cols_n..(s + 1) * o * cols_n];
                if let Some(dw) = dw.as_mut() {
                    im2col(&x[s * c * h * w..(s + 1) * c * h * w], geo, &mut cols);
                    gemm(false, true, o, rows, cols_n, gs, &cols, T::one(), dw);
                }
                if let Some(dx) = dx.as_mut() {
                    gemm(true, false, rows, cols_n, o, &wt, gs, T::zero(), &mut cols);
                    col2im(&cols, geo, &mut dx[s * c * h * w..(s + 1) * c * h * w]);
                }
            }
            let db = p[2].requires_grad().then(|| bias_grad(g, n, o, cols_n));
            vec![dx, dw, db]
        },
    ))
}

/// Transposed 2-D convolution (the adjoint of [`conv2d`] in its input).
/// `input: [N, Cin, H, W]`, `weight: [Cin, Cout, K, K]`, `bias: [Cout]`.
pub fn conv_transpose2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor<T>> {
    check_rank4("conv_transpose2d", input, weight)?;
    let &[n, cin, h, w] = input.shape() else { unreachable!() };
    let &[wc, cout, k, _] = weight.shape() else { unreachable!() };
    if wc != cin || bias.shape() != [cout] {
        return Err(Error::ShapeMismatch {
            op: "conv_transpose2d",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    if stride == 0 || output_padding >= stride {
        return Err(Error::invalid(format!(
            "conv_transpose2d needs stride >= 1 and output_padding < stride (got {stride}, {output_padding})"
        )));
    }
    let (Some(oh), Some(ow)) = (
        conv_transpose_output_extent(h, k, stride, padding, output_padding),
        conv_transpose_output_extent(w, k, stride, padding, output_padding),
    ) else {
        return Err(Error::ShapeMismatch {
            op: "conv_transpose2d (empty output)",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    };
    // The output image plays the role of a conv2d input whose output is `input`.
    let geo = Geometry { channels: cout, h: oh, w: ow, k, stride, pad: padding, oh: h, ow: w };
    let (rows, cols_n) = (geo.col_rows(), geo.col_cols());
    let out_plane = oh * ow;

    let mut out = vec![T::zero(); n * cout * out_plane];
    {
        let x = input.data();
        let wt = weight.data();
        let b = bias.data();
        let mut cols = vec![T::zero(); rows * cols_n];
        for s in 0..n {
            let xs = &x[s * cin * cols_n..(s + 1) * cin * cols_n];
            gemm(true, false, rows, cols_n, cin, &wt, xs, T::zero(), &mut cols);
            let dst = &mut out[s * cout * out_plane..(s + 1) * cout * out_plane];
            for (ch, plane) in dst.chunks_mut(out_plane).enumerate() {
                plane.fill(b[ch]);
            }
            col2im(&cols, geo, dst);
        }
    }

    Ok(Tensor::from_op(
        vec![n, cout, oh, ow],
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        move |g, p| {
            let need_x = p[0].requires_grad();
            let need_w = p[1].requires_grad();
            let x = p[0].data();
            let wt = p[1].data();
            let mut dx = need_x.then(|| vec![T::zero(); n * cin * cols_n]);
            let mut dw = need_w.then(|| vec![T::zero(); cin * rows]);
            let mut gcols = vec![T::zero(); rows * cols_n];
            for s in 0..n {
                if !need_x && !need_w {
                    break;
                }
                im2col(&g[s * cout * out_plane..(s + 1) * cout * out_plane], geo, &mut gcols);
                if let Some(dx) = dx.as_mut() {
                    gemm(false, false, cin, cols_n, rows, &wt, &gcols, T::zero(), &mut dx[s * cin * cols_n..(s + 1) * cin * cols_n]);
                }
                if let Some(dw) = dw.as_mut() {
                    let xs = &x[s * cin * cols_n..(s + 1) * cin * cols_n];
                    gemm(false, true, cin, rows, cols_n, xs, &gcols, T::one(), dw);
                }
            }
            let db = p[2].requires_grad().then(|| bias_grad(g, n, cout, out_plane));
            vec![dx, dw, db]
        },
    ))
}
