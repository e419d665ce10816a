use super::gemm::gemm;
use super::{numel, Real, Tensor};
use crate::error::{Error, Result};

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Real> Tensor<T> {
    fn map_unary(&self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Self {
        // df(x, y) is the local derivative given input x and output y
        let out: Vec<T> = self.data().iter().map(|&x| f(x)).collect();
        let saved = out.clone();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g, p| {
            let x = p[0].data();
            let dx = g
                .iter()
                .zip(x.iter().zip(&saved))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(dx)]
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        same_shape("add", self, other)?;
        let out = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a + b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            |g, _| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        same_shape("sub", self, other)?;
        let out = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a - b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            |g, _| vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())],
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Self> {
        same_shape("mul", self, other)?;
        let out = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a * b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            |g, p| {
                let (a, b) = (p[0].data(), p[1].data());
                let da = g.iter().zip(b.iter()).map(|(&g, &b)| g * b).collect();
                let db = g.iter().zip(a.iter()).map(|(&g, &a)| g * a).collect();
                vec![Some(da), Some(db)]
            },
        ))
    }

    pub fn scale(&self, factor: f64) -> Self {
        let k = T::cast(factor);
        self.map_unary(move |x| x * k, move |_, _| k)
    }

    pub fn add_scalar(&self, offset: f64) -> Self {
        let c = T::cast(offset);
        self.map_unary(move |x| x + c, |_, _| T::one())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn relu(&self) -> Self {
        self.leaky_relu(0.0)
    }

    /// `x` for `x > 0`, `slope·x` otherwise; the kink takes the negative-side slope.
    pub fn leaky_relu(&self, slope: f64) -> Self {
        let s = T::cast(slope);
        self.map_unary(
            move |x| if x > T::zero() { x } else { s * x },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn tanh(&self) -> Self {
        self.map_unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn sigmoid(&self) -> Self {
        self.map_unary(sigmoid, |_, y| y * (T::one() - y))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Self {
        self.map_unary(
            |x| {
                let zero = T::zero();
                x.max(zero) + (-x.abs()).exp().ln_1p()
            },
            |x, _| sigmoid(x),
        )
    }

    /// `ln(max(x, eps))`; the gradient is zero where the clamp is active.
    pub fn log_clamped(&self, eps: f64) -> Self {
        let e = T::cast(eps);
        self.map_unary(
            move |x| x.max(e).ln(),
            move |x, _| if x > e { T::one() / x } else { T::zero() },
        )
    }

    pub fn sum(&self) -> Self {
        let total = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(vec![], vec![total], vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Result<Self> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::Empty("mean of empty tensor".into()));
        }
        Ok(self.sum().scale(1.0 / n as f64))
    }

    /// Same values under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(shape.to_vec(), self.to_vec(), vec![self.clone()], |g, _| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Rows `indices` along the leading axis, in the given order.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        let rows = *self.shape().first().ok_or_else(|| Error::invalid("gather on a scalar"))?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(format!("row index {bad} out of range for {rows} rows")));
        }
        let stride = self.numel() / rows.max(1);
        let data = self.data();
        let mut out = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            out.extend_from_slice(&data[i * stride..(i + 1) * stride]);
        }
        drop(data);
        let mut shape = self.shape().to_vec();
        shape[0] = indices.len();
        let idx = indices.to_vec();
        let total = self.numel();
        Ok(Tensor::from_op(shape, out, vec![self.clone()], move |g, _| {
            let mut dx = vec![T::zero(); total];
            for (k, &i) in idx.iter().enumerate() {
                for (d, &v) in dx[i * stride..(i + 1) * stride].iter_mut().zip(&g[k * stride..(k + 1) * stride]) {
                    *d = *d + v;
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Concatenates tensors along axis 1; all other extents must agree.
    pub fn concat_channels(parts: &[Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Empty("concat of no tensors".into()))?;
        if first.shape().len() < 2 {
            return Err(Error::invalid("concat_channels needs rank >= 2"));
        }
        let n = first.shape()[0];
        let inner: usize = first.shape()[2..].iter().product();
        for p in parts {
            if p.shape().len() != first.shape().len() || p.shape()[0] != n || p.shape()[2..] != first.shape()[2..] {
                return Err(Error::ShapeMismatch {
                    op: "concat_channels",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let chans: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
        let total_c: usize = chans.iter().sum();
        let mut out = Vec::with_capacity(n * total_c * inner);
        for s in 0..n {
            for (p, &c) in parts.iter().zip(&chans) {
                let d = p.data();
                out.extend_from_slice(&d[s * c * inner..(s + 1) * c * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[1] = total_c;
        Ok(Tensor::from_op(shape, out, parts.to_vec(), move |g, _| {
            let mut grads: Vec<Vec<T>> = chans.iter().map(|&c| Vec::with_capacity(n * c * inner)).collect();
            let mut off = 0;
            for _ in 0..n {
                for (gp, &c) in grads.iter_mut().zip(&chans) {
                    gp.extend_from_slice(&g[off..off + c * inner]);
                    off += c * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Affine map `x·Wᵀ + b` with `x: [N, in]`, `W: [out, in]`, `b: [out]`.
pub fn dense<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (xs, ws, bs) = (x.shape(), weight.shape(), bias.shape());
    if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[1] || bs[0] != ws[0] {
        return Err(Error::ShapeMismatch {
            op: "dense",
            lhs: xs.to_vec(),
            rhs: ws.to_vec(),
        });
    }
    let (n, fin, fout) = (xs[0], xs[1], ws[0]);
    let mut out = vec![T::zero(); n * fout];
    {
        let b = bias.data();
        for row in out.chunks_mut(fout) {
            row.copy_from_slice(&b);
        }
        gemm(false, true, n, fout, fin, &x.data(), &weight.data(), T::one(), &mut out);
    }
    Ok(Tensor::from_op(
        vec![n, fout],
        out,
        vec![x.clone(), weight.clone(), bias.clone()],
        move |g, p| {
            let dx = p[0].requires_grad().then(|| {
                let mut dx = vec![T::zero(); n * fin];
                gemm(false, false, n, fin, fout, g, &p[1].data(), T::zero(), &mut dx);
                dx
            });
            let dw = p[1].requires_grad().then(|| {
                let mut dw = vec![T::zero(); fout * fin];
                gemm(true, false, fout, fin, n, g, &p[0].data(), T::zero(), &mut dw);
                dw
            });
            let db = p[2].requires_grad().then(|| {
                let mut db = vec![T::zero(); fout];
                for row in g.chunks(fout) {
                    db.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
                }
                db
            });
            vec![dx, dw, db]
        },
    ))
}
