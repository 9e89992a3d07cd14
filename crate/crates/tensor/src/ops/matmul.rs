// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Var};
use crate::tensor::Tensor;

/// `c[m, n] (+)= a[m, k] @ b[k, n]`, row-major, optional transposes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the slices cover m*k, k*n and m*n elements for the strides above.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'t, T: Real> Var<'t, T> {
    /// Matrix product `self[..., k] @ rhs[k, n] -> [..., n]`; leading axes of
    /// `self` are treated as rows.
    pub fn matmul(self, rhs: Var<'t, T>) -> Result<Self> {
        let (a, b) = (self.value(), rhs.value());
        let (ash, bsh) = (a.shape(), b.shape());
        if ash.is_empty() || bsh.len() != 2 || ash[ash.len() - 1] != bsh[0] {
            return Err(TensorError::mismatch("matmul", ash, bsh));
        }
        let k = bsh[0];
        let n = bsh[1];
        let m = a.numel() / k.max(1);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
        let mut shape = ash.to_vec();
        *shape.last_mut().expect("rank >= 1") = n;
        let value = Tensor::new(&shape, out)?;
        Ok(self.tape().push(
            value,
            Op::MatMul {
                a: self.id(),
                b: rhs.id(),
                m,
                k,
                n,
            },
            &[self.id(), rhs.id()],
        ))
    }
}

pub(crate) fn backward<T: Real>(
    a: usize,
    b: usize,
    (m, k, n): (usize, usize, usize),
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if acc.wants(a) {
        let bv = acc.value(b);
        // da = g @ b^T
        gemm(m, n, k, grad, false, bv.data(), true, acc.buf(a), true);
    }
    if acc.wants(b) {
        let av = acc.value(a);
        // db = a^T @ g
        gemm(k, m, n, av.data(), true, grad, false, acc.buf(b), true);
    }
}
