// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear recurrence `h_t = a_t * h_{t-1} + b_t`, `h_0 = b_0`.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Var};
use crate::tensor::Tensor;

const BLOCK: usize = 8;

/// Reference loop over `[outer, steps, inner]` data.
pub fn scan_sequential<T: Real>(
    a: &[T],
    b: &[T],
    outer: usize,
    steps: usize,
    inner: usize,
) -> Vec<T> {
    let mut h = b.to_vec();
    for o in 0..outer {
        let base = o * steps * inner;
        for t in 1..steps {
            for i in 0..inner {
                let cur = base + t * inner + i;
                h[cur] = a[cur] * h[cur - inner] + b[cur];
            }
        }
    }
    h
}

/// Two-level scan: independent scans inside blocks of `BLOCK` steps, then a
/// carry pass that folds each block's incoming state through the cumulative
/// decay of its prefix.
pub fn scan_blocked<T: Real>(a: &[T], b: &[T], outer: usize, steps: usize, inner: usize) -> Vec<T> {
    let mut h = b.to_vec();
    let mut decay = vec![T::one(); a.len()];
    for o in 0..outer {
        let base = o * steps * inner;
        for start in (0..steps).step_by(BLOCK) {
            let end = (start + BLOCK).min(steps);
            for i in 0..inner {
                decay[base + start * inner + i] = a[base + start * inner + i];
            }
            for t in start + 1..end {
                for i in 0..inner {
                    let cur = base + t * inner + i;
                    h[cur] = a[cur] * h[cur - inner] + b[cur];
                    decay[cur] = a[cur] * decay[cur - inner];
                }
            }
        }
        for start in (BLOCK..steps).step_by(BLOCK) {
            let end = (start + BLOCK).min(steps);
            for i in 0..inner {
                let carry = h[base + (start - 1) * inner + i];
                for t in start..end {
                    let cur = base + t * inner + i;
                    h[cur] += decay[cur] * carry;
                }
            }
        }
    }
    h
}

impl<'t, T: Real> Var<'t, T> {
    /// Scan along `axis` with decays `self` and inputs `b` of the same shape.
    pub fn scan(self, b: Var<'t, T>, axis: usize) -> Result<Self> {
        let (av, bv) = (self.value(), b.value());
        if av.shape() != bv.shape() {
            return Err(TensorError::mismatch("scan", av.shape(), bv.shape()));
        }
        let shape = av.shape();
        if axis >= shape.len() {
            return Err(TensorError::invalid(
                "scan",
                format!("axis {axis} out of range"),
            ));
        }
        let outer = shape[..axis].iter().product();
        let steps = shape[axis];
        let inner = shape[axis + 1..].iter().product();
        let h = scan_blocked(av.data(), bv.data(), outer, steps, inner);
        Ok(self.tape().push(
            Tensor::new(shape, h)?,
            Op::Scan {
                a: self.id(),
                b: b.id(),
                outer,
                steps,
                inner,
            },
            &[self.id(), b.id()],
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn scan_backward<T: Real>(
    a: usize,
    b: usize,
    (outer, steps, inner): (usize, usize, usize),
    out: &Tensor<T>,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let av = acc.value(a);
    let (ad, h) = (av.data(), out.data());
    let mut dh = grad.to_vec();
    for o in 0..outer {
        let base = o * steps * inner;
        for t in (0..steps.saturating_sub(1)).rev() {
            for i in 0..inner {
                let cur = base + t * inner + i;
                let next = ad[cur + inner] * dh[cur + inner];
                dh[cur] += next;
            }
        }
    }
    if acc.wants(a) {
        let mut da = vec![T::zero(); ad.len()];
        for o in 0..outer {
            let base = o * steps * inner;
            for t in 1..steps {
                for i in 0..inner {
                    let cur = base + t * inner + i;
                    da[cur] = dh[cur] * h[cur - inner];
                }
            }
        }
        acc.add(a, da);
    }
    acc.add(b, dh);
}
