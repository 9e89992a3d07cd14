// SPDX-License-Identifier: MIT OR Apache-2.0

//! Causal single-head attention variants over `[..., T, f]` inputs.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Tape, Var};
use crate::tensor::Tensor;

use super::conv::seq_dims;
use super::matmul::gemm;

pub const TAYLOR_EPS: f64 = 1e-12;

struct Dims {
    batch: usize,
    t: usize,
    f: usize,
    dv: usize,
}

fn qkv_dims<T: Real>(
    op: &'static str,
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Dims> {
    let (batch, t, f) = seq_dims(op, q.shape())?;
    if k.shape() != q.shape() {
        return Err(TensorError::mismatch(op, q.shape(), k.shape()));
    }
    let (vb, vt, dv) = seq_dims(op, v.shape())?;
    if vb != batch || vt != t || v.shape()[..v.rank() - 1] != q.shape()[..q.rank() - 1] {
        return Err(TensorError::mismatch(op, q.shape(), v.shape()));
    }
    Ok(Dims { batch, t, f, dv })
}

fn out_shape(v: &Tensor<impl Real>) -> Vec<usize> {
    v.shape().to_vec()
}

/// Raw scores `q k^T` for one sequence, `[T, T]`.
fn scores<T: Real>(q: &[T], k: &[T], t: usize, f: usize) -> Vec<T> {
    let mut s = vec![T::zero(); t * t];
    gemm(t, f, t, q, false, k, true, &mut s, false);
    s
}

/// Taylor kernel `1 + s + s^2 / 2` on scaled scores, zero above the diagonal.
fn taylor_weights<T: Real>(raw: &mut [T], t: usize, scale: T) {
    for i in 0..t {
        for j in 0..t {
            let v = &mut raw[i * t + j];
            *v = if j > i {
                T::zero()
            } else {
                let s = *v * scale;
                T::one() + s + s * s * T::of(0.5)
            };
        }
    }
}

impl<T: Real> Tape<T> {
    /// `softmax(q k^T / sqrt(f) + causal mask) v`.
    pub fn causal_attention<'t>(
        &'t self,
        q: Var<'t, T>,
        k: Var<'t, T>,
        v: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let (qv, kv, vv) = (q.value(), k.value(), v.value());
        let Dims { batch, t, f, dv } = qkv_dims("causal_attention", &qv, &kv, &vv)?;
        let scale = T::of(1.0 / (f as f64).sqrt());
        let mut probs = Vec::with_capacity(batch * t * t);
        let mut out = vec![T::zero(); batch * t * dv];
        for b in 0..batch {
            let qs = &qv.data()[b * t * f..(b + 1) * t * f];
            let ks = &kv.data()[b * t * f..(b + 1) * t * f];
            let mut p = scores(qs, ks, t, f);
            for i in 0..t {
                let row = &mut p[i * t..(i + 1) * t];
                let mut m = T::neg_infinity();
                for x in row[..=i].iter_mut() {
                    *x *= scale;
                    m = m.max(*x);
                }
                let mut sum = T::zero();
                for x in row[..=i].iter_mut() {
                    *x = (*x - m).exp();
                    sum += *x;
                }
                for x in row[..=i].iter_mut() {
                    *x /= sum;
                }
                row[i + 1..].iter_mut().for_each(|x| *x = T::zero());
            }
            let vs = &vv.data()[b * t * dv..(b + 1) * t * dv];
            gemm(
                t,
                t,
                dv,
                &p,
                false,
                vs,
                false,
                &mut out[b * t * dv..(b + 1) * t * dv],
                false,
            );
            probs.extend(p);
        }
        Ok(self.push(
            Tensor::new(&out_shape(&vv), out)?,
            Op::CausalAttention {
                q: q.id(),
                k: k.id(),
                v: v.id(),
                probs,
            },
            &[q.id(), k.id(), v.id()],
        ))
    }

    /// Linear attention with the second-order Taylor feature map, computed in
    /// the quadratic view: `A = 1 + s + s^2/2`, `s = q.k / sqrt(f)`,
    /// `y_t = sum_s A_ts v_s / (sum_s A_ts + eps)`.
    pub fn taylor_attention<'t>(
        &'t self,
        q: Var<'t, T>,
        k: Var<'t, T>,
        v: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let (qv, kv, vv) = (q.value(), k.value(), v.value());
        let Dims { batch, t, f, dv } = qkv_dims("taylor_attention", &qv, &kv, &vv)?;
        let scale = T::of(1.0 / (f as f64).sqrt());
        let mut denom = Vec::with_capacity(batch * t);
        let mut out = vec![T::zero(); batch * t * dv];
        for b in 0..batch {
            let qs = &qv.data()[b * t * f..(b + 1) * t * f];
            let ks = &kv.data()[b * t * f..(b + 1) * t * f];
            let mut a = scores(qs, ks, t, f);
            taylor_weights(&mut a, t, scale);
            let vs = &vv.data()[b * t * dv..(b + 1) * t * dv];
            let o = &mut out[b * t * dv..(b + 1) * t * dv];
            gemm(t, t, dv, &a, false, vs, false, o, false);
            for i in 0..t {
                let den = a[i * t..(i + 1) * t].iter().copied().sum::<T>() + T::of(TAYLOR_EPS);
                o[i * dv..(i + 1) * dv].iter_mut().for_each(|x| *x /= den);
                denom.push(den);
            }
        }
        Ok(self.push(
            Tensor::new(&out_shape(&vv), out)?,
            Op::TaylorAttention {
                q: q.id(),
                k: k.id(),
                v: v.id(),
                denom,
            },
            &[q.id(), k.id(), v.id()],
        ))
    }

    /// Decayed bilinear attention `y_t = sum_{s<=t} K[t-s] * (q_t . k_s) * v_s`,
    /// with a lag-indexed per-channel `kernel[L, dv]`, `L >= T`.
    pub fn kernel_attention<'t>(
        &'t self,
        q: Var<'t, T>,
        k: Var<'t, T>,
        v: Var<'t, T>,
        kernel: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let (qv, kv, vv, kern) = (q.value(), k.value(), v.value(), kernel.value());
        let Dims { batch, t, f, dv } = qkv_dims("kernel_attention", &qv, &kv, &vv)?;
        if kern.rank() != 2 || kern.shape()[1] != dv || kern.shape()[0] < t {
            return Err(TensorError::mismatch(
                "kernel_attention",
                vv.shape(),
                kern.shape(),
            ));
        }
        let kd = kern.data();
        let mut out = vec![T::zero(); batch * t * dv];
        for b in 0..batch {
            let qs = &qv.data()[b * t * f..(b + 1) * t * f];
            let ks = &kv.data()[b * t * f..(b + 1) * t * f];
            let a = scores(qs, ks, t, f);
            let vs = &vv.data()[b * t * dv..(b + 1) * t * dv];
            let o = &mut out[b * t * dv..(b + 1) * t * dv];
            for i in 0..t {
                for j in 0..=i {
                    let w = a[i * t + j];
                    let lag = &kd[(i - j) * dv..(i - j + 1) * dv];
                    for c in 0..dv {
                        o[i * dv + c] += w * lag[c] * vs[j * dv + c];
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::new(&out_shape(&vv), out)?,
            Op::KernelAttention {
                q: q.id(),
                k: k.id(),
                v: v.id(),
                kernel: kernel.id(),
            },
            &[q.id(), k.id(), v.id(), kernel.id()],
        ))
    }
}

/// Shared tail: given `dS[T, T]` for one sequence, accumulate into dq and dk.
#[allow(clippy::too_many_arguments)]
fn scores_backward<T: Real>(
    ds: &[T],
    q: &[T],
    k: &[T],
    t: usize,
    f: usize,
    dq: &mut [T],
    dk: &mut [T],
) {
    gemm(t, t, f, ds, false, k, false, dq, true);
    gemm(t, t, f, ds, true, q, false, dk, true);
}

pub(crate) fn causal_attention_backward<T: Real>(
    [q, k, v]: [usize; 3],
    probs: &[T],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let (qv, kv, vv) = (acc.value(q), acc.value(k), acc.value(v));
    let Dims { batch, t, f, dv } =
        qkv_dims("causal_attention", &qv, &kv, &vv).expect("checked in forward");
    let scale = T::of(1.0 / (f as f64).sqrt());
    let mut dq = vec![T::zero(); qv.numel()];
    let mut dk = vec![T::zero(); kv.numel()];
    let mut dvv = vec![T::zero(); vv.numel()];
    let mut dp = vec![T::zero(); t * t];
    for b in 0..batch {
        let p = &probs[b * t * t..(b + 1) * t * t];
        let g = &grad[b * t * dv..(b + 1) * t * dv];
        let vs = &vv.data()[b * t * dv..(b + 1) * t * dv];
        gemm(t, dv, t, g, false, vs, true, &mut dp, false);
        for i in 0..t {
            let row_p = &p[i * t..(i + 1) * t];
            let row = &mut dp[i * t..(i + 1) * t];
            let dot: T = row_p.iter().zip(row.iter()).map(|(&a, &b)| a * b).sum();
            for (x, &pp) in row.iter_mut().zip(row_p) {
                *x = pp * (*x - dot) * scale;
            }
        }
        let qs = &qv.data()[b * t * f..(b + 1) * t * f];
        let ks = &kv.data()[b * t * f..(b + 1) * t * f];
        scores_backward(
            &dp,
            qs,
            ks,
            t,
            f,
            &mut dq[b * t * f..(b + 1) * t * f],
            &mut dk[b * t * f..(b + 1) * t * f],
        );
        gemm(
            t,
            t,
            dv,
            p,
            true,
            g,
            false,
            &mut dvv[b * t * dv..(b + 1) * t * dv],
            true,
        );
    }
    acc.add(q, dq);
    acc.add(k, dk);
    acc.add(v, dvv);
}

pub(crate) fn taylor_attention_backward<T: Real>(
    [q, k, v]: [usize; 3],
    denom: &[T],
    out: &Tensor<T>,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let (qv, kv, vv) = (acc.value(q), acc.value(k), acc.value(v));
    let Dims { batch, t, f, dv } =
        qkv_dims("taylor_attention", &qv, &kv, &vv).expect("checked in forward");
    let scale = T::of(1.0 / (f as f64).sqrt());
    let mut dq = vec![T::zero(); qv.numel()];
    let mut dk = vec![T::zero(); kv.numel()];
    let mut dvv = vec![T::zero(); vv.numel()];
    let mut dn = vec![T::zero(); t * dv];
    let mut da = vec![T::zero(); t * t];
    for b in 0..batch {
        let qs = &qv.data()[b * t * f..(b + 1) * t * f];
        let ks = &kv.data()[b * t * f..(b + 1) * t * f];
        let vs = &vv.data()[b * t * dv..(b + 1) * t * dv];
        let g = &grad[b * t * dv..(b + 1) * t * dv];
        let y = &out.data()[b * t * dv..(b + 1) * t * dv];
        let raw = scores(qs, ks, t, f);
        let mut a = raw.clone();
        taylor_weights(&mut a, t, scale);
        let mut dden = vec![T::zero(); t];
        for i in 0..t {
            let den = denom[b * t + i];
            let mut gy = T::zero();
            for c in 0..dv {
                dn[i * dv + c] = g[i * dv + c] / den;
                gy += g[i * dv + c] * y[i * dv + c];
            }
            dden[i] = -gy / den;
        }
        gemm(t, dv, t, &dn, false, vs, true, &mut da, false);
        for i in 0..t {
            for j in 0..t {
                let x = &mut da[i * t + j];
                *x = if j > i {
                    T::zero()
                } else {
                    let s = raw[i * t + j] * scale;
                    (*x + dden[i]) * (T::one() + s) * scale
                };
            }
        }
        scores_backward(
            &da,
            qs,
            ks,
            t,
            f,
            &mut dq[b * t * f..(b + 1) * t * f],
            &mut dk[b * t * f..(b + 1) * t * f],
        );
        gemm(
            t,
            t,
            dv,
            &a,
            true,
            &dn,
            false,
            &mut dvv[b * t * dv..(b + 1) * t * dv],
            true,
        );
    }
    acc.add(q, dq);
    acc.add(k, dk);
    acc.add(v, dvv);
}

pub(crate) fn kernel_attention_backward<T: Real>(
    [q, k, v, kernel]: [usize; 4],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let (qv, kv, vv, kern) = (acc.value(q), acc.value(k), acc.value(v), acc.value(kernel));
    let Dims { batch, t, f, dv } =
        qkv_dims("kernel_attention", &qv, &kv, &vv).expect("checked in forward");
    let kd = kern.data();
    let mut dq = vec![T::zero(); qv.numel()];
    let mut dk = vec![T::zero(); kv.numel()];
    let mut dvv = vec![T::zero(); vv.numel()];
    let mut dkern = vec![T::zero(); kern.numel()];
    let mut da = vec![T::zero(); t * t];
    for b in 0..batch {
        let qs = &qv.data()[b * t * f..(b + 1) * t * f];
        let ks = &kv.data()[b * t * f..(b + 1) * t * f];
        let vs = &vv.data()[b * t * dv..(b + 1) * t * dv];
        let g = &grad[b * t * dv..(b + 1) * t * dv];
        let a = scores(qs, ks, t, f);
        let dvb = &mut dvv[b * t * dv..(b + 1) * t * dv];
        da.iter_mut().for_each(|x| *x = T::zero());
        for i in 0..t {
            for j in 0..=i {
                let w = a[i * t + j];
                let lag = (i - j) * dv;
                let mut dw = T::zero();
                for c in 0..dv {
                    let gc = g[i * dv + c];
                    let kvc = kd[lag + c] * vs[j * dv + c];
                    dw += gc * kvc;
                    dvb[j * dv + c] += gc * w * kd[lag + c];
                    dkern[lag + c] += gc * w * vs[j * dv + c];
                }
                da[i * t + j] = dw;
            }
        }
        scores_backward(
            &da,
            qs,
            ks,
            t,
            f,
            &mut dq[b * t * f..(b + 1) * t * f],
            &mut dk[b * t * f..(b + 1) * t * f],
        );
    }
    acc.add(q, dq);
    acc.add(k, dk);
    acc.add(v, dvv);
    acc.add(kernel, dkern);
}
