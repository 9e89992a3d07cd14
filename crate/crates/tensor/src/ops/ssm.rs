// SPDX-License-Identifier: MIT OR Apache-2.0

//! Selective (input-dependent) diagonal state-space scan.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Tape, Var};
use crate::tensor::Tensor;

use super::conv::seq_dims;

impl<T: Real> Tape<T> {
    /// `h_t = exp(dt_t * A) h_{t-1} + dt_t * B_t * x_t`, `y_t = h_t C_t`.
    ///
    /// Shapes: `x, dt: [..., T, D]`, `a: [D, N]`, `b, c: [..., T, N]`.
    /// The state is `[D, N]` per sequence; `dt` is used as given (already positive).
    pub fn selective_scan<'t>(
        &'t self,
        x: Var<'t, T>,
        dt: Var<'t, T>,
        a: Var<'t, T>,
        b: Var<'t, T>,
        c: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let (xv, dtv, av, bv, cv) = (x.value(), dt.value(), a.value(), b.value(), c.value());
        let (bs, t_len, d) = seq_dims("selective_scan", xv.shape())?;
        if dtv.shape() != xv.shape() {
            return Err(TensorError::mismatch(
                "selective_scan",
                xv.shape(),
                dtv.shape(),
            ));
        }
        if av.rank() != 2 || av.shape()[0] != d {
            return Err(TensorError::mismatch(
                "selective_scan",
                xv.shape(),
                av.shape(),
            ));
        }
        let n = av.shape()[1];
        let (_, tb, nb) = seq_dims("selective_scan", bv.shape())?;
        if bv.shape() != cv.shape() || tb != t_len || nb != n || bv.numel() != bs * t_len * n {
            return Err(TensorError::mismatch(
                "selective_scan",
                bv.shape(),
                cv.shape(),
            ));
        }
        let (xs, dts, am, bm, cm) = (xv.data(), dtv.data(), av.data(), bv.data(), cv.data());
        let dn = d * n;
        let mut states = vec![T::zero(); bs * t_len * dn];
        let mut decays = vec![T::zero(); bs * t_len * dn];
        let mut y = vec![T::zero(); xv.numel()];
        for s in 0..bs {
            for t in 0..t_len {
                let row = s * t_len + t;
                let cur = row * dn;
                for di in 0..d {
                    let delta = dts[row * d + di];
                    let inp = delta * xs[row * d + di];
                    let mut acc = T::zero();
                    for ni in 0..n {
                        let e = (delta * am[di * n + ni]).exp();
                        let prev = if t == 0 {
                            T::zero()
                        } else {
                            states[cur - dn + di * n + ni]
                        };
                        let h = e * prev + inp * bm[row * n + ni];
                        decays[cur + di * n + ni] = e;
                        states[cur + di * n + ni] = h;
                        acc += h * cm[row * n + ni];
                    }
                    y[row * d + di] = acc;
                }
            }
        }
        Ok(self.push(
            Tensor::new(xv.shape(), y)?,
            Op::SelectiveScan {
                x: x.id(),
                dt: dt.id(),
                a: a.id(),
                b: b.id(),
                c: c.id(),
                states,
                decays,
            },
            &[x.id(), dt.id(), a.id(), b.id(), c.id()],
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn selective_scan_backward<T: Real>(
    ids: [usize; 5],
    states: &[T],
    decays: &[T],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let [x, dt, a, b, c] = ids;
    let (xv, dtv, av, bv, cv) = (
        acc.value(x),
        acc.value(dt),
        acc.value(a),
        acc.value(b),
        acc.value(c),
    );
    let (bs, t_len, d) = seq_dims("selective_scan", xv.shape()).expect("checked in forward");
    let n = av.shape()[1];
    let dn = d * n;
    let (xs, dts, am, bm, cm) = (xv.data(), dtv.data(), av.data(), bv.data(), cv.data());
    let mut dx = vec![T::zero(); xs.len()];
    let mut ddt = vec![T::zero(); dts.len()];
    let mut da = vec![T::zero(); am.len()];
    let mut db = vec![T::zero(); bm.len()];
    let mut dc = vec![T::zero(); cm.len()];
    let mut dh = vec![T::zero(); dn];
    for s in 0..bs {
        dh.iter_mut().for_each(|v| *v = T::zero());
        for t in (0..t_len).rev() {
            let row = s * t_len + t;
            let cur = row * dn;
            for di in 0..d {
                let g = grad[row * d + di];
                let delta = dts[row * d + di];
                let xi = xs[row * d + di];
                let mut ddelta = T::zero();
                let mut dxi = T::zero();
                for ni in 0..n {
                    let k = di * n + ni;
                    let h = states[cur + k];
                    dc[row * n + ni] += g * h;
                    let dhk = dh[k] + g * cm[row * n + ni];
                    let e = decays[cur + k];
                    let prev = if t == 0 {
                        T::zero()
                    } else {
                        states[cur - dn + k]
                    };
                    let de = dhk * prev * e;
                    da[k] += de * delta;
                    ddelta += de * am[k] + dhk * bm[row * n + ni] * xi;
                    db[row * n + ni] += dhk * delta * xi;
                    dxi += dhk * delta * bm[row * n + ni];
                    dh[k] = dhk * e;
                }
                ddt[row * d + di] += ddelta;
                dx[row * d + di] += dxi;
            }
        }
    }
    acc.add(x, dx);
    acc.add(dt, ddt);
    acc.add(a, da);
    acc.add(b, db);
    acc.add(c, dc);
}
