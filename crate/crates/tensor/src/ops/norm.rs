// SPDX-License-Identifier: MIT OR Apache-2.0

//! Softmax, layer norm and L2 normalisation.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const L2_EPS: f64 = 1e-12;

fn softmax_in_place<T: Real>(data: &mut [T], outer: usize, n: usize, inner: usize) {
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            let idx = |j: usize| base + j * inner + i;
            let mut m = T::neg_infinity();
            for j in 0..n {
                m = m.max(data[idx(j)]);
            }
            let mut s = T::zero();
            for j in 0..n {
                let e = (data[idx(j)] - m).exp();
                data[idx(j)] = e;
                s += e;
            }
            for j in 0..n {
                data[idx(j)] /= s;
            }
        }
    }
}

impl<'t, T: Real> Var<'t, T> {
    /// Softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Self> {
        let v = self.value();
        let shape = v.shape();
        if axis >= shape.len() {
            return Err(TensorError::invalid(
                "softmax",
                format!("axis {axis} out of range"),
            ));
        }
        let outer = shape[..axis].iter().product();
        let n = shape[axis];
        let inner = shape[axis + 1..].iter().product();
        let mut data = v.data().to_vec();
        softmax_in_place(&mut data, outer, n, inner);
        Ok(self.tape().push(
            Tensor::new(shape, data)?,
            Op::Softmax {
                a: self.id(),
                outer,
                n,
                inner,
            },
            &[self.id()],
        ))
    }

    /// Layer norm over the last axis with affine `gain` and `bias` of shape `[d]`.
    pub fn layer_norm(self, gain: Var<'t, T>, bias: Var<'t, T>) -> Result<Self> {
        let v = self.value();
        let d = v.last_dim();
        if gain.shape() != [d] || bias.shape() != [d] {
            return Err(TensorError::mismatch(
                "layer_norm",
                v.shape(),
                &gain.shape(),
            ));
        }
        let (gv, bv) = (gain.value(), bias.value());
        let rows = v.numel() / d.max(1);
        let mut out = Vec::with_capacity(v.numel());
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        let inv_d = T::of(1.0 / d as f64);
        for row in v.data().chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() * inv_d;
            let rstd = T::one() / (var + T::of(LAYER_NORM_EPS)).sqrt();
            for ((&x, &g), &b) in row.iter().zip(gv.data()).zip(bv.data()) {
                out.push((x - mean) * rstd * g + b);
            }
            means.push(mean);
            rstds.push(rstd);
        }
        Ok(self.tape().push(
            Tensor::new(v.shape(), out)?,
            Op::LayerNorm {
                x: self.id(),
                gain: gain.id(),
                bias: bias.id(),
                mean: means,
                rstd: rstds,
            },
            &[self.id(), gain.id(), bias.id()],
        ))
    }

    /// `x / max(||x||, eps)` over the last axis.
    pub fn l2_normalize(self) -> Self {
        let v = self.value();
        let d = v.last_dim().max(1);
        let mut out = Vec::with_capacity(v.numel());
        let mut norms = Vec::with_capacity(v.numel() / d);
        for row in v.data().chunks_exact(d) {
            let n = row
                .iter()
                .map(|&x| x * x)
                .sum::<T>()
                .sqrt()
                .max(T::of(L2_EPS));
            out.extend(row.iter().map(|&x| x / n));
            norms.push(n);
        }
        let value = Tensor::new(v.shape(), out).expect("same shape");
        self.tape().push(
            value,
            Op::L2Normalize {
                a: self.id(),
                norms,
            },
            &[self.id()],
        )
    }
}

pub(crate) fn softmax_backward<T: Real>(
    a: usize,
    (outer, n, inner): (usize, usize, usize),
    out: &Tensor<T>,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if !acc.wants(a) {
        return;
    }
    let y = out.data();
    let buf = acc.buf(a);
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            let idx = |j: usize| base + j * inner + i;
            let dot: T = (0..n).map(|j| y[idx(j)] * grad[idx(j)]).sum();
            for j in 0..n {
                buf[idx(j)] += y[idx(j)] * (grad[idx(j)] - dot);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward<T: Real>(
    x: usize,
    gain: usize,
    bias: usize,
    mean: &[T],
    rstd: &[T],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let xv = acc.value(x);
    let gv = acc.value(gain);
    let d = xv.last_dim();
    let inv_d = T::of(1.0 / d as f64);
    let mut dgain = vec![T::zero(); d];
    let mut dbias = vec![T::zero(); d];
    let mut dx = if acc.wants(x) {
        Some(vec![T::zero(); xv.numel()])
    } else {
        None
    };
    let mut xhat = vec![T::zero(); d];
    let mut dxhat = vec![T::zero(); d];
    for (r, (row, g)) in xv
        .data()
        .chunks_exact(d)
        .zip(grad.chunks_exact(d))
        .enumerate()
    {
        let (m, s) = (mean[r], rstd[r]);
        for j in 0..d {
            xhat[j] = (row[j] - m) * s;
            dxhat[j] = g[j] * gv.data()[j];
            dgain[j] += g[j] * xhat[j];
            dbias[j] += g[j];
        }
        if let Some(dx) = dx.as_mut() {
            let mean_d = dxhat.iter().copied().sum::<T>() * inv_d;
            let mean_dx = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() * inv_d;
            for j in 0..d {
                dx[r * d + j] = s * (dxhat[j] - mean_d - xhat[j] * mean_dx);
            }
        }
    }
    if let Some(dx) = dx {
        acc.add(x, dx);
    }
    acc.add(gain, dgain);
    acc.add(bias, dbias);
}

pub(crate) fn l2_backward<T: Real>(
    a: usize,
    norms: &[T],
    out: &Tensor<T>,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if !acc.wants(a) {
        return;
    }
    let d = out.last_dim().max(1);
    let eps = T::of(L2_EPS);
    let buf = acc.buf(a);
    for (r, ((y, g), dst)) in out
        .data()
        .chunks_exact(d)
        .zip(grad.chunks_exact(d))
        .zip(buf.chunks_exact_mut(d))
        .enumerate()
    {
        let n = norms[r];
        if n <= eps {
            for (o, &gi) in dst.iter_mut().zip(g) {
                *o += gi / n;
            }
            continue;
        }
        let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for ((o, &yi), &gi) in dst.iter_mut().zip(y).zip(g) {
            *o += (gi - yi * dot) / n;
        }
    }
}
