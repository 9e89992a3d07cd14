// SPDX-License-Identifier: MIT OR Apache-2.0

//! Causal depthwise convolutions over `[..., T, d]` sequences.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Var};
use crate::tensor::Tensor;

/// Split a `[..., T, d]` shape into (batch, T, d).
pub(crate) fn seq_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(TensorError::invalid(
            op,
            format!("expected [..., T, d], got {shape:?}"),
        ));
    }
    let r = shape.len();
    Ok((shape[..r - 2].iter().product(), shape[r - 2], shape[r - 1]))
}

impl<'t, T: Real> Var<'t, T> {
    /// Depthwise causal conv with `kernel[k, d]`; tap `k - 1` multiplies the
    /// current token, tap `k - 1 - j` the token `j` steps back.
    pub fn causal_conv1d(self, kernel: Var<'t, T>, bias: Option<Var<'t, T>>) -> Result<Self> {
        let xv = self.value();
        let kv = kernel.value();
        let (b, t_len, d) = seq_dims("causal_conv1d", xv.shape())?;
        if kv.rank() != 2 || kv.shape()[1] != d || kv.shape()[0] == 0 {
            return Err(TensorError::mismatch(
                "causal_conv1d",
                xv.shape(),
                kv.shape(),
            ));
        }
        if let Some(bias) = bias {
            if bias.shape() != [d] {
                return Err(TensorError::mismatch(
                    "causal_conv1d",
                    xv.shape(),
                    &bias.shape(),
                ));
            }
        }
        let k = kv.shape()[0];
        let (x, w) = (xv.data(), kv.data());
        let mut out = match bias {
            Some(bias) => {
                let bv = bias.value();
                bv.data().repeat(b * t_len)
            }
            None => vec![T::zero(); xv.numel()],
        };
        for bi in 0..b {
            let base = bi * t_len * d;
            for t in 0..t_len {
                let dst = &mut out[base + t * d..base + (t + 1) * d];
                for j in 0..k.min(t + 1) {
                    let src = &x[base + (t - j) * d..base + (t - j + 1) * d];
                    let tap = &w[(k - 1 - j) * d..(k - j) * d];
                    for c in 0..d {
                        dst[c] += tap[c] * src[c];
                    }
                }
            }
        }
        let mut parents = vec![self.id(), kernel.id()];
        parents.extend(bias.map(|b| b.id()));
        Ok(self.tape().push(
            Tensor::new(xv.shape(), out)?,
            Op::CausalConv {
                x: self.id(),
                kernel: kernel.id(),
                bias: bias.map(|b| b.id()),
            },
            &parents,
        ))
    }

    /// Long causal conv with a lag-indexed `filter[L, d]`, `L >= T`:
    /// `y[t] = sum_{s <= t} filter[t - s] * x[s]` per channel.
    pub fn long_conv(self, filter: Var<'t, T>) -> Result<Self> {
        let xv = self.value();
        let fv = filter.value();
        let (b, t_len, d) = seq_dims("long_conv", xv.shape())?;
        if fv.rank() != 2 || fv.shape()[1] != d || fv.shape()[0] < t_len {
            return Err(TensorError::mismatch("long_conv", xv.shape(), fv.shape()));
        }
        let (x, f) = (xv.data(), fv.data());
        let mut out = vec![T::zero(); xv.numel()];
        for bi in 0..b {
            let base = bi * t_len * d;
            for t in 0..t_len {
                let dst = &mut out[base + t * d..base + (t + 1) * d];
                for s in 0..=t {
                    let src = &x[base + s * d..base + (s + 1) * d];
                    let tap = &f[(t - s) * d..(t - s + 1) * d];
                    for c in 0..d {
                        dst[c] += tap[c] * src[c];
                    }
                }
            }
        }
        Ok(self.tape().push(
            Tensor::new(xv.shape(), out)?,
            Op::LongConv {
                x: self.id(),
                filter: filter.id(),
            },
            &[self.id(), filter.id()],
        ))
    }
}

pub(crate) fn causal_conv_backward<T: Real>(
    x: usize,
    kernel: usize,
    bias: Option<usize>,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let xv = acc.value(x);
    let kv = acc.value(kernel);
    let (b, t_len, d) = seq_dims("causal_conv1d", xv.shape()).expect("checked in forward");
    let k = kv.shape()[0];
    let (xs, w) = (xv.data(), kv.data());
    let mut dx = vec![T::zero(); xv.numel()];
    let mut dw = vec![T::zero(); kv.numel()];
    for bi in 0..b {
        let base = bi * t_len * d;
        for t in 0..t_len {
            let g = &grad[base + t * d..base + (t + 1) * d];
            for j in 0..k.min(t + 1) {
                let src = base + (t - j) * d;
                let tap = (k - 1 - j) * d;
                for c in 0..d {
                    dx[src + c] += w[tap + c] * g[c];
                    dw[tap + c] += xs[src + c] * g[c];
                }
            }
        }
    }
    acc.add(x, dx);
    acc.add(kernel, dw);
    if let Some(bias) = bias {
        let mut db = vec![T::zero(); d];
        for row in grad.chunks_exact(d) {
            for (o, &g) in db.iter_mut().zip(row) {
                *o += g;
            }
        }
        acc.add(bias, db);
    }
}

pub(crate) fn long_conv_backward<T: Real>(
    x: usize,
    filter: usize,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let xv = acc.value(x);
    let fv = acc.value(filter);
    let (b, t_len, d) = seq_dims("long_conv", xv.shape()).expect("checked in forward");
    let (xs, f) = (xv.data(), fv.data());
    let mut dx = vec![T::zero(); xv.numel()];
    let mut df = vec![T::zero(); fv.numel()];
    for bi in 0..b {
        let base = bi * t_len * d;
        for t in 0..t_len {
            let g = &grad[base + t * d..base + (t + 1) * d];
            for s in 0..=t {
                let src = base + s * d;
                let tap = (t - s) * d;
                for c in 0..d {
                    dx[src + c] += f[tap + c] * g[c];
                    df[tap + c] += xs[src + c] * g[c];
                }
            }
        }
    }
    acc.add(x, dx);
    acc.add(filter, df);
}
