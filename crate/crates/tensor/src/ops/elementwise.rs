// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pointwise unary and broadcasting binary operations.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{GradAcc, Op, Var};
use crate::tensor::{broadcast_index_map, broadcast_shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Exp,
    Silu,
    /// tanh approximation
    Gelu,
    Sigmoid,
    Softplus,
    Sin,
    Neg,
    Square,
}

/// How each operand maps onto the output.
pub(crate) enum Bcast {
    Same,
    /// `b` is a trailing block repeated over `a`
    RepeatB,
    /// `a` is a trailing block repeated over `b`
    RepeatA,
    General {
        map_a: Vec<usize>,
        map_b: Vec<usize>,
    },
}

fn plan(a: &[usize], b: &[usize]) -> Option<(Vec<usize>, Bcast)> {
    if a == b {
        return Some((a.to_vec(), Bcast::Same));
    }
    let out = broadcast_shape(a, b)?;
    if out == a && a.ends_with(b) {
        return Some((out, Bcast::RepeatB));
    }
    if out == b && b.ends_with(a) {
        return Some((out, Bcast::RepeatA));
    }
    let map_a = broadcast_index_map(a, &out);
    let map_b = broadcast_index_map(b, &out);
    Some((out, Bcast::General { map_a, map_b }))
}

#[inline]
fn apply<T: Real>(kind: BinaryKind, x: T, y: T) -> T {
    match kind {
        BinaryKind::Add => x + y,
        BinaryKind::Sub => x - y,
        BinaryKind::Mul => x * y,
        BinaryKind::Div => x / y,
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub(crate) fn softplus<T: Real>(x: T) -> T {
    if x > T::of(20.0) {
        x
    } else {
        x.max(T::zero()) + (-x.abs()).exp().ln_1p()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu<T: Real>(x: T) -> T {
    let inner = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + inner.tanh())
}

#[inline]
fn gelu_grad<T: Real>(x: T) -> T {
    let inner = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let th = inner.tanh();
    let dinner = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * dinner
}

#[inline]
fn unary<T: Real>(kind: UnaryKind, x: T) -> T {
    match kind {
        UnaryKind::Exp => x.exp(),
        UnaryKind::Silu => x * sigmoid(x),
        UnaryKind::Gelu => gelu(x),
        UnaryKind::Sigmoid => sigmoid(x),
        UnaryKind::Softplus => softplus(x),
        UnaryKind::Sin => x.sin(),
        UnaryKind::Neg => -x,
        UnaryKind::Square => x * x,
    }
}

/// d unary / dx given input `x` and output `y`.
#[inline]
fn unary_grad<T: Real>(kind: UnaryKind, x: T, y: T) -> T {
    match kind {
        UnaryKind::Exp => y,
        UnaryKind::Silu => {
            let s = sigmoid(x);
            s + x * s * (T::one() - s)
        }
        UnaryKind::Gelu => gelu_grad(x),
        UnaryKind::Sigmoid => y * (T::one() - y),
        UnaryKind::Softplus => sigmoid(x),
        UnaryKind::Sin => x.cos(),
        UnaryKind::Neg => -T::one(),
        UnaryKind::Square => x + x,
    }
}

impl<'t, T: Real> Var<'t, T> {
    fn binary(self, other: Var<'t, T>, kind: BinaryKind, name: &'static str) -> Result<Self> {
        debug_assert!(self.same_tape(&other));
        let (av, bv) = (self.value(), other.value());
        let (shape, bcast) = plan(av.shape(), bv.shape())
            .ok_or_else(|| TensorError::mismatch(name, av.shape(), bv.shape()))?;
        let (a, b) = (av.data(), bv.data());
        let data: Vec<T> = match &bcast {
            Bcast::Same => a.iter().zip(b).map(|(&x, &y)| apply(kind, x, y)).collect(),
            Bcast::RepeatB => {
                let mut out = Vec::with_capacity(a.len());
                for chunk in a.chunks_exact(b.len().max(1)) {
                    out.extend(chunk.iter().zip(b).map(|(&x, &y)| apply(kind, x, y)));
                }
                out
            }
            Bcast::RepeatA => {
                let mut out = Vec::with_capacity(b.len());
                for chunk in b.chunks_exact(a.len().max(1)) {
                    out.extend(a.iter().zip(chunk).map(|(&x, &y)| apply(kind, x, y)));
                }
                out
            }
            Bcast::General { map_a, map_b } => map_a
                .iter()
                .zip(map_b)
                .map(|(&i, &j)| apply(kind, a[i], b[j]))
                .collect(),
        };
        let value = Tensor::new(&shape, data)?;
        Ok(self.tape().push(
            value,
            Op::Binary {
                kind,
                a: self.id(),
                b: other.id(),
                bcast,
            },
            &[self.id(), other.id()],
        ))
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Self> {
        self.binary(other, BinaryKind::Add, "add")
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Self> {
        self.binary(other, BinaryKind::Sub, "sub")
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Self> {
        self.binary(other, BinaryKind::Mul, "mul")
    }

    pub fn div(self, other: Var<'t, T>) -> Result<Self> {
        self.binary(other, BinaryKind::Div, "div")
    }

    pub fn unary(self, kind: UnaryKind) -> Self {
        let x = self.value();
        let value = x.map(|v| unary(kind, v));
        self.tape()
            .push(value, Op::Unary { kind, a: self.id() }, &[self.id()])
    }

    pub fn exp(self) -> Self {
        self.unary(UnaryKind::Exp)
    }

    pub fn silu(self) -> Self {
        self.unary(UnaryKind::Silu)
    }

    pub fn gelu(self) -> Self {
        self.unary(UnaryKind::Gelu)
    }

    pub fn sigmoid(self) -> Self {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn softplus(self) -> Self {
        self.unary(UnaryKind::Softplus)
    }

    pub fn sin(self) -> Self {
        self.unary(UnaryKind::Sin)
    }

    pub fn neg(self) -> Self {
        self.unary(UnaryKind::Neg)
    }

    pub fn square(self) -> Self {
        self.unary(UnaryKind::Square)
    }

    pub fn scale(self, factor: f64) -> Self {
        let factor = T::of(factor);
        let value = self.value().map(|v| v * factor);
        self.tape().push(
            value,
            Op::Scale {
                a: self.id(),
                factor,
            },
            &[self.id()],
        )
    }
}

/// Sum `g` (laid out over the output) back onto an operand of `n` elements.
fn reduce_repeat<T: Real>(g: &[T], n: usize, dst: &mut [T], f: impl Fn(usize, T) -> T) {
    for (c, chunk) in g.chunks_exact(n).enumerate() {
        for (j, (d, &x)) in dst.iter_mut().zip(chunk).enumerate() {
            *d += f(c * n + j, x);
        }
    }
}

pub(crate) fn binary_backward<T: Real>(
    kind: BinaryKind,
    a: usize,
    b: usize,
    bcast: &Bcast,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    let av = acc.value(a).clone();
    let bv = acc.value(b).clone();
    let (ad, bd) = (av.data(), bv.data());
    let (na, nb) = (ad.len(), bd.len());
    // index of each output element into a and b
    let ia = |i: usize| match bcast {
        Bcast::Same | Bcast::RepeatB => i,
        Bcast::RepeatA => i % na,
        Bcast::General { map_a, .. } => map_a[i],
    };
    let ib = |i: usize| match bcast {
        Bcast::Same | Bcast::RepeatA => i,
        Bcast::RepeatB => i % nb,
        Bcast::General { map_b, .. } => map_b[i],
    };
    let da = |i: usize, g: T| match kind {
        BinaryKind::Add | BinaryKind::Sub => g,
        BinaryKind::Mul => g * bd[ib(i)],
        BinaryKind::Div => g / bd[ib(i)],
    };
    let db = |i: usize, g: T| match kind {
        BinaryKind::Add => g,
        BinaryKind::Sub => -g,
        BinaryKind::Mul => g * ad[ia(i)],
        BinaryKind::Div => -g * ad[ia(i)] / (bd[ib(i)] * bd[ib(i)]),
    };
    if acc.wants(a) {
        let buf = acc.buf(a);
        match bcast {
            Bcast::Same | Bcast::RepeatB => {
                for (i, (d, &g)) in buf.iter_mut().zip(grad).enumerate() {
                    *d += da(i, g);
                }
            }
            Bcast::RepeatA => reduce_repeat(grad, na, buf, da),
            Bcast::General { map_a, .. } => {
                for (i, &g) in grad.iter().enumerate() {
                    buf[map_a[i]] += da(i, g);
                }
            }
        }
    }
    if acc.wants(b) {
        let buf = acc.buf(b);
        match bcast {
            Bcast::Same | Bcast::RepeatA => {
                for (i, (d, &g)) in buf.iter_mut().zip(grad).enumerate() {
                    *d += db(i, g);
                }
            }
            Bcast::RepeatB => reduce_repeat(grad, nb, buf, db),
            Bcast::General { map_b, .. } => {
                for (i, &g) in grad.iter().enumerate() {
                    buf[map_b[i]] += db(i, g);
                }
            }
        }
    }
}

pub(crate) fn unary_backward<T: Real>(
    kind: UnaryKind,
    a: usize,
    out: &Tensor<T>,
    grad: &[T],
    acc: &mut GradAcc<'_, T>,
) {
    if !acc.wants(a) {
        return;
    }
    let x = acc.value(a).clone();
    let buf = acc.buf(a);
    for (((d, &g), &xi), &yi) in buf.iter_mut().zip(grad).zip(x.data()).zip(out.data()) {
        *d += g * unary_grad(kind, xi, yi);
    }
}

pub(crate) fn scale_backward<T: Real>(a: usize, factor: T, grad: &[T], acc: &mut GradAcc<'_, T>) {
    if !acc.wants(a) {
        return;
    }
    for (d, &g) in acc.buf(a).iter_mut().zip(grad) {
        *d += g * factor;
    }
}
