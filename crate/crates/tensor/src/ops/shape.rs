// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reductions, reshapes, row gathers and row splices.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Tape, Var};
use crate::tensor::Tensor;

impl<T: Real> Tape<T> {
    /// Rows of `table[V, d]` selected by `ids`, shaped `index_shape + [d]`.
    pub fn embedding<'t>(
        &'t self,
        table: Var<'t, T>,
        ids: &[usize],
        index_shape: &[usize],
    ) -> Result<Var<'t, T>> {
        let tv = table.value();
        if tv.rank() != 2 {
            return Err(TensorError::invalid(
                "embedding",
                "table must be [vocab, dim]",
            ));
        }
        if index_shape.iter().product::<usize>() != ids.len() {
            return Err(TensorError::invalid(
                "embedding",
                "index shape does not match ids",
            ));
        }
        let (vocab, d) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(TensorError::invalid(
                    "embedding",
                    format!("token {id} outside vocabulary of {vocab}"),
                ));
            }
            out.extend_from_slice(tv.row(id));
        }
        let mut shape = index_shape.to_vec();
        shape.push(d);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Embedding {
                table: table.id(),
                ids: ids.to_vec(),
            },
            &[table.id()],
        ))
    }

    /// Concatenate along the last axis; leading shapes must agree.
    pub fn concat_last<'t>(&'t self, parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let first = values
            .first()
            .ok_or_else(|| TensorError::invalid("concat_last", "no inputs"))?;
        let lead = &first.shape()[..first.rank() - 1];
        let rows = lead.iter().product::<usize>();
        let mut width = 0;
        for v in &values {
            if &v.shape()[..v.rank() - 1] != lead {
                return Err(TensorError::mismatch(
                    "concat_last",
                    first.shape(),
                    v.shape(),
                ));
            }
            width += v.last_dim();
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for v in &values {
                out.extend_from_slice(v.row(r));
            }
        }
        let mut shape = lead.to_vec();
        shape.push(width);
        let ids: Vec<usize> = parts.iter().map(|p| p.id()).collect();
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::ConcatLast { parts: ids.clone() },
            &ids,
        ))
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn sum(self) -> Self {
        let s: T = self.value().data().iter().copied().sum();
        self.tape()
            .push(Tensor::scalar(s), Op::SumAll { a: self.id() }, &[self.id()])
    }

    pub fn mean(self) -> Self {
        let n = self.value().numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }

    /// Sum over the last axis, dropping it.
    pub fn sum_last(self) -> Self {
        let v = self.value();
        let w = v.last_dim().max(1);
        let data: Vec<T> = v
            .data()
            .chunks_exact(w)
            .map(|c| c.iter().copied().sum())
            .collect();
        let shape = &v.shape()[..v.rank().saturating_sub(1)];
        let value = Tensor::new(shape, data).expect("reduced shape");
        self.tape()
            .push(value, Op::SumLast { a: self.id() }, &[self.id()])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let v = (*self.value()).clone().reshape(shape)?;
        Ok(self
            .tape()
            .push(v, Op::Reshape { a: self.id() }, &[self.id()]))
    }

    /// Transpose of a matrix.
    pub fn transpose(self) -> Result<Self> {
        let v = self.value();
        let &[rows, cols] = v.shape() else {
            return Err(TensorError::invalid(
                "transpose",
                format!("expected a matrix, got {:?}", v.shape()),
            ));
        };
        let data = transposed(v.data(), rows, cols);
        Ok(self.tape().push(
            Tensor::new(&[cols, rows], data)?,
            Op::Transpose {
                a: self.id(),
                rows,
                cols,
            },
            &[self.id()],
        ))
    }

    /// Slice `[start, start + len)` of the last axis.
    pub fn narrow_last(self, start: usize, len: usize) -> Result<Self> {
        let v = self.value();
        let w = v.last_dim();
        if start + len > w {
            return Err(TensorError::invalid(
                "narrow_last",
                format!("range {start}..{} exceeds width {w}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(v.numel() / w.max(1) * len);
        for row in v.data().chunks_exact(w) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = v.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = len;
        Ok(self.tape().push(
            Tensor::new(&shape, out)?,
            Op::NarrowLast {
                a: self.id(),
                start,
            },
            &[self.id()],
        ))
    }

    /// Rows of `self` viewed as `[rows, last_dim]`, stacked as `[rows.len(), last_dim]`.
    pub fn gather_rows(self, rows: &[usize]) -> Result<Self> {
        let v = self.value();
        let w = v.last_dim();
        let n_rows = v.numel() / w.max(1);
        let mut out = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            if r >= n_rows {
                return Err(TensorError::invalid(
                    "gather_rows",
                    format!("row {r} out of {n_rows}"),
                ));
            }
            out.extend_from_slice(v.row(r));
        }
        Ok(self.tape().push(
            Tensor::new(&[rows.len(), w], out)?,
            Op::GatherRows {
                a: self.id(),
                rows: rows.to_vec(),
            },
            &[self.id()],
        ))
    }

    /// Copy of `self` with the given rows (in the `[rows, last_dim]` view)
    /// overwritten by the rows of `values[rows.len(), last_dim]`.
    ///
    /// Replaced rows are cut from the gradient path; `values` is a constant.
    pub fn splice_rows(self, rows: &[usize], values: &Tensor<T>) -> Result<Self> {
        let v = self.value();
        let w = v.last_dim();
        let n_rows = v.numel() / w.max(1);
        if values.numel() != rows.len() * w {
            return Err(TensorError::mismatch(
                "splice_rows",
                v.shape(),
                values.shape(),
            ));
        }
        let mut out = v.data().to_vec();
        for (i, &r) in rows.iter().enumerate() {
            if r >= n_rows {
                return Err(TensorError::invalid(
                    "splice_rows",
                    format!("row {r} out of {n_rows}"),
                ));
            }
            out[r * w..(r + 1) * w].copy_from_slice(&values.data()[i * w..(i + 1) * w]);
        }
        Ok(self.tape().push(
            Tensor::new(v.shape(), out)?,
            Op::SpliceRows {
                a: self.id(),
                rows: rows.to_vec(),
            },
            &[self.id()],
        ))
    }
}

pub(crate) fn sum_all_backward<T: Real>(a: usize, grad: &[T], acc: &mut GradAcc<'_, T>) {
    if !acc.wants(a) {
        return;
    }
    let g = grad[0];
    for d in acc.buf(a) {
        *d += g;
    }
}

pub(crate) fn sum_last_backward<T: Real>(a: usize, grad: &[T], acc: &mut GradAcc<'_, T>) {
    if !acc.wants(a) {
        return;
    }
    let w = acc.value(a).last_dim().max(1);
    for (chunk, &g) in acc.buf(a).chunks_exact_mut(w).zip(grad) {
        for d in chunk {
            *d += g;
        }
    }
}

pub(crate) fn passthrough_backward<T: Real>(a: usize, grad: &[T], acc: &mut GradAcc<'_, T>) {
    if !acc.wants(a) {
        return;
    }
    for (d, &g) in acc.buf(a).iter_mut().zip(grad) {
        *d += g;
    }
}

fn transposed<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

pub(crate) fn transpose_backward<T: Real>(
    a: usize,
    (rows, cols): (usize, usize),
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if acc.wants(a) {
        acc.add(a, transposed(grad, cols, rows));
    }
}

pub(crate) fn narrow_backward<T: Real>(
    a: usize,
    start: usize,
    out: &Tensor<T>,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if !acc.wants(a) {
        return;
    }
    let w = acc.value(a).last_dim();
    let len = out.last_dim();
    for (dst, src) in acc.buf(a).chunks_exact_mut(w).zip(grad.chunks_exact(len)) {
        for (d, &g) in dst[start..start + len].iter_mut().zip(src) {
            *d += g;
        }
    }
}

pub(crate) fn concat_backward<T: Real>(
    parts: &[usize],
    out: &Tensor<T>,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let width = out.last_dim();
    let mut offset = 0;
    for &p in parts {
        let w = acc.value(p).last_dim();
        if acc.wants(p) {
            for (dst, src) in acc.buf(p).chunks_exact_mut(w).zip(grad.chunks_exact(width)) {
                for (d, &g) in dst.iter_mut().zip(&src[offset..offset + w]) {
                    *d += g;
                }
            }
        }
        offset += w;
    }
}

pub(crate) fn embedding_backward<T: Real>(
    table: usize,
    ids: &[usize],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if !acc.wants(table) {
        return;
    }
    let d = acc.value(table).last_dim();
    let buf = acc.buf(table);
    for (&id, g) in ids.iter().zip(grad.chunks_exact(d)) {
        for (dst, &x) in buf[id * d..(id + 1) * d].iter_mut().zip(g) {
            *dst += x;
        }
    }
}

pub(crate) fn gather_backward<T: Real>(
    a: usize,
    rows: &[usize],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if !acc.wants(a) {
        return;
    }
    let w = acc.value(a).last_dim();
    let buf = acc.buf(a);
    for (&r, g) in rows.iter().zip(grad.chunks_exact(w)) {
        for (dst, &x) in buf[r * w..(r + 1) * w].iter_mut().zip(g) {
            *dst += x;
        }
    }
}

pub(crate) fn splice_backward<T: Real>(
    a: usize,
    rows: &[usize],
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if !acc.wants(a) {
        return;
    }
    let w = acc.value(a).last_dim();
    let mut g = grad.to_vec();
    for &r in rows {
        g[r * w..(r + 1) * w]
            .iter_mut()
            .for_each(|x| *x = T::zero());
    }
    acc.add(a, g);
}
