// SPDX-License-Identifier: MIT OR Apache-2.0

//! Masked softmax cross-entropy.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Var};
use crate::tensor::Tensor;

impl<'t, T: Real> Var<'t, T> {
    /// Mean NLL over the rows (in the `[rows, V]` view) where `mask` is set.
    pub fn cross_entropy_masked(self, targets: &[usize], mask: &[bool]) -> Result<Self> {
        if targets.len() != mask.len() {
            return Err(TensorError::invalid(
                "cross_entropy",
                "targets and mask differ in length",
            ));
        }
        let pairs: Vec<(usize, usize)> = mask
            .iter()
            .zip(targets)
            .enumerate()
            .filter(|(_, (&m, _))| m)
            .map(|(r, (_, &t))| (r, t))
            .collect();
        self.cross_entropy_rows(&pairs)
    }

    /// Mean NLL of `target` at each `(row, target)` pair.
    pub fn cross_entropy_rows(self, pairs: &[(usize, usize)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(TensorError::EmptyMask);
        }
        let v = self.value();
        let vocab = v.last_dim();
        let n_rows = v.numel() / vocab.max(1);
        let mut probs = Vec::with_capacity(pairs.len() * vocab);
        let mut loss = T::zero();
        for &(r, target) in pairs {
            if r >= n_rows || target >= vocab {
                return Err(TensorError::invalid(
                    "cross_entropy",
                    format!("row {r} / target {target} outside [{n_rows}, {vocab}]"),
                ));
            }
            let row = v.row(r);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&x| (x - m).exp()).sum();
            let lse = m + sum.ln();
            loss += lse - row[target];
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
        }
        loss /= T::of(pairs.len() as f64);
        Ok(self.tape().push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: self.id(),
                rows: pairs.to_vec(),
                probs,
            },
            &[self.id()],
        ))
    }
}

pub(crate) fn cross_entropy_backward<T: Real>(
    logits: usize,
    rows: &[(usize, usize)],
    probs: &[T],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if !acc.wants(logits) {
        return;
    }
    let vocab = acc.value(logits).last_dim();
    let scale = grad[0] / T::of(rows.len() as f64);
    let buf = acc.buf(logits);
    for (i, &(r, target)) in rows.iter().enumerate() {
        let p = &probs[i * vocab..(i + 1) * vocab];
        let dst = &mut buf[r * vocab..(r + 1) * vocab];
        for (d, &pj) in dst.iter_mut().zip(p) {
            *d += scale * pj;
        }
        dst[target] -= scale;
    }
}
