// SPDX-License-Identifier: MIT OR Apache-2.0

//! Delta-rule fast-weight recurrence.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Tape, Var};
use crate::tensor::Tensor;

use super::conv::seq_dims;

impl<T: Real> Tape<T> {
    /// `S_t = S_{t-1} + beta_t (v_t - S_{t-1} k_t) k_t^T`, `o_t = S_t q_t`.
    ///
    /// Shapes: `q, k: [..., T, dk]`, `v: [..., T, dv]`, `beta: [..., T, 1]`.
    /// `S` is `[dv, dk]`, zero at the start of each sequence.
    pub fn delta_rule<'t>(
        &'t self,
        q: Var<'t, T>,
        k: Var<'t, T>,
        v: Var<'t, T>,
        beta: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let (qv, kv, vv, bv) = (q.value(), k.value(), v.value(), beta.value());
        let (batch, t_len, dk) = seq_dims("delta_rule", qv.shape())?;
        if kv.shape() != qv.shape() {
            return Err(TensorError::mismatch("delta_rule", qv.shape(), kv.shape()));
        }
        let (vb, vt, dv) = seq_dims("delta_rule", vv.shape())?;
        if vb != batch || vt != t_len {
            return Err(TensorError::mismatch("delta_rule", qv.shape(), vv.shape()));
        }
        if bv.numel() != batch * t_len {
            return Err(TensorError::mismatch("delta_rule", qv.shape(), bv.shape()));
        }
        let (qs, ks, vs, bs) = (qv.data(), kv.data(), vv.data(), bv.data());
        let sz = dv * dk;
        let mut states = vec![T::zero(); batch * t_len * sz];
        let mut out = vec![T::zero(); batch * t_len * dv];
        let mut u = vec![T::zero(); dv];
        for b in 0..batch {
            for t in 0..t_len {
                let row = b * t_len + t;
                let kt = &ks[row * dk..(row + 1) * dk];
                let (before, rest) = states.split_at_mut(row * sz);
                let cur = &mut rest[..sz];
                if t > 0 {
                    cur.copy_from_slice(&before[(row - 1) * sz..row * sz]);
                }
                for i in 0..dv {
                    let sk: T = cur[i * dk..(i + 1) * dk]
                        .iter()
                        .zip(kt)
                        .map(|(&s, &x)| s * x)
                        .sum();
                    u[i] = bs[row] * (vs[row * dv + i] - sk);
                }
                for i in 0..dv {
                    for (s, &x) in cur[i * dk..(i + 1) * dk].iter_mut().zip(kt) {
                        *s += u[i] * x;
                    }
                }
                let qt = &qs[row * dk..(row + 1) * dk];
                for i in 0..dv {
                    out[row * dv + i] = cur[i * dk..(i + 1) * dk]
                        .iter()
                        .zip(qt)
                        .map(|(&s, &x)| s * x)
                        .sum();
                }
            }
        }
        Ok(self.push(
            Tensor::new(vv.shape(), out)?,
            Op::DeltaRule {
                q: q.id(),
                k: k.id(),
                v: v.id(),
                beta: beta.id(),
                states,
            },
            &[q.id(), k.id(), v.id(), beta.id()],
        ))
    }
}

pub(crate) fn delta_rule_backward<T: Real>(
    [q, k, v, beta]: [usize; 4],
    states: &[T],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let (qv, kv, vv, bv) = (acc.value(q), acc.value(k), acc.value(v), acc.value(beta));
    let (batch, t_len, dk) = seq_dims("delta_rule", qv.shape()).expect("checked in forward");
    let dv = vv.last_dim();
    let (qs, ks, vs, bs) = (qv.data(), kv.data(), vv.data(), bv.data());
    let sz = dv * dk;
    let mut dq = vec![T::zero(); qs.len()];
    let mut dkk = vec![T::zero(); ks.len()];
    let mut dvv = vec![T::zero(); vs.len()];
    let mut dbeta = vec![T::zero(); bs.len()];
    let mut g_state = vec![T::zero(); sz];
    let zeros = vec![T::zero(); sz];
    let mut u = vec![T::zero(); dv];
    let mut gk = vec![T::zero(); dv];
    for b in 0..batch {
        g_state.iter_mut().for_each(|x| *x = T::zero());
        for t in (0..t_len).rev() {
            let row = b * t_len + t;
            let s_cur = &states[row * sz..(row + 1) * sz];
            let s_prev = if t == 0 {
                &zeros[..]
            } else {
                &states[(row - 1) * sz..row * sz]
            };
            let g = &grad[row * dv..(row + 1) * dv];
            let qt = &qs[row * dk..(row + 1) * dk];
            let kt = &ks[row * dk..(row + 1) * dk];
            for i in 0..dv {
                for j in 0..dk {
                    g_state[i * dk + j] += g[i] * qt[j];
                    dq[row * dk + j] += s_cur[i * dk + j] * g[i];
                }
            }
            let bt = bs[row];
            let mut db = T::zero();
            for i in 0..dv {
                let sk: T = s_prev[i * dk..(i + 1) * dk]
                    .iter()
                    .zip(kt)
                    .map(|(&s, &x)| s * x)
                    .sum();
                u[i] = vs[row * dv + i] - sk;
                gk[i] = g_state[i * dk..(i + 1) * dk]
                    .iter()
                    .zip(kt)
                    .map(|(&s, &x)| s * x)
                    .sum();
                db += u[i] * gk[i];
            }
            dbeta[row] = db;
            for i in 0..dv {
                let du = bt * gk[i];
                dvv[row * dv + i] += du;
                for j in 0..dk {
                    dkk[row * dk + j] += bt * g_state[i * dk + j] * u[i] - s_prev[i * dk + j] * du;
                }
                for j in 0..dk {
                    g_state[i * dk + j] -= du * kt[j];
                }
            }
        }
    }
    acc.add(q, dq);
    acc.add(k, dkk);
    acc.add(v, dvv);
    acc.add(beta, dbeta);
}
