// SPDX-License-Identifier: MIT OR Apache-2.0

//! Define-by-run reverse-mode tape.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation appends one
//! node holding its output value and enough saved state to run its
//! vector-Jacobian product; [`Tape::backward`] walks the nodes in reverse.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::ops;
use crate::real::Real;
use crate::tensor::Tensor;

pub(crate) struct Node<T: Real> {
    pub value: Rc<Tensor<T>>,
    pub op: Op<T>,
    pub requires_grad: bool,
}

/// Recorded operation with parent node ids and saved state.
pub(crate) enum Op<T: Real> {
    Leaf,
    Binary {
        kind: ops::elementwise::BinaryKind,
        a: usize,
        b: usize,
        bcast: ops::elementwise::Bcast,
    },
    Unary {
        kind: ops::elementwise::UnaryKind,
        a: usize,
    },
    Scale {
        a: usize,
        factor: T,
    },
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    SumAll {
        a: usize,
    },
    SumLast {
        a: usize,
    },
    Reshape {
        a: usize,
    },
    Transpose {
        a: usize,
        rows: usize,
        cols: usize,
    },
    NarrowLast {
        a: usize,
        start: usize,
    },
    ConcatLast {
        parts: Vec<usize>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    GatherRows {
        a: usize,
        rows: Vec<usize>,
    },
    SpliceRows {
        a: usize,
        rows: Vec<usize>,
    },
    Softmax {
        a: usize,
        outer: usize,
        n: usize,
        inner: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    L2Normalize {
        a: usize,
        norms: Vec<T>,
    },
    CausalConv {
        x: usize,
        kernel: usize,
        bias: Option<usize>,
    },
    LongConv {
        x: usize,
        filter: usize,
    },
    Scan {
        a: usize,
        b: usize,
        outer: usize,
        steps: usize,
        inner: usize,
    },
    SelectiveScan {
        x: usize,
        dt: usize,
        a: usize,
        b: usize,
        c: usize,
        states: Vec<T>,
        decays: Vec<T>,
    },
    CausalAttention {
        q: usize,
        k: usize,
        v: usize,
        probs: Vec<T>,
    },
    TaylorAttention {
        q: usize,
        k: usize,
        v: usize,
        denom: Vec<T>,
    },
    KernelAttention {
        q: usize,
        k: usize,
        v: usize,
        kernel: usize,
    },
    DeltaRule {
        q: usize,
        k: usize,
        v: usize,
        beta: usize,
        states: Vec<T>,
    },
    CrossEntropy {
        logits: usize,
        rows: Vec<(usize, usize)>,
        probs: Vec<T>,
    },
}

pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub(crate) fn same_tape(&self, other: &Var<'t, T>) -> bool {
        std::ptr::eq(self.tape, other.tape)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differentiable leaf (a parameter or an input under test).
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_node(value, Op::Leaf, true)
    }

    /// Copy of `value` as a differentiable leaf.
    pub fn param(&self, value: &Tensor<T>) -> Var<'_, T> {
        self.leaf(value.clone())
    }

    /// Non-differentiable input.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_node(value, Op::Leaf, false)
    }

    pub(crate) fn value(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn push_node(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Record an op; the node needs a gradient iff any parent does.
    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>, parents: &[usize]) -> Var<'_, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|&p| nodes[p].requires_grad)
        };
        self.push_node(value, op, requires_grad)
    }

    /// Gradients of a scalar `loss` with respect to every node that needs one.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Grads<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let (before, after) = grads.split_at_mut(id);
            let mut acc = GradAcc {
                grads: before,
                nodes: &nodes,
            };
            ops::backward(&node.op, &node.value, &grad, &mut acc);
            after[0] = Some(grad);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Grads { grads, shapes })
    }
}

/// Accumulator handed to each op's backward rule.
pub(crate) struct GradAcc<'a, T: Real> {
    grads: &'a mut [Option<Vec<T>>],
    nodes: &'a [Node<T>],
}

impl<T: Real> GradAcc<'_, T> {
    pub fn wants(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn value(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes[id].value)
    }

    /// Mutable gradient buffer for `id`, zero-initialised on first use.
    pub fn buf(&mut self, id: usize) -> &mut [T] {
        let n = self.nodes[id].value.numel();
        self.grads[id].get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn add(&mut self, id: usize, g: Vec<T>) {
        if !self.wants(id) {
            return;
        }
        match &mut self.grads[id] {
            Some(existing) => {
                for (e, x) in existing.iter_mut().zip(g) {
                    *e += x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
pub struct Grads<T: Real> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Grads<T> {
    /// Gradient of `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.by_id(var.id)
    }

    pub fn by_id(&self, id: usize) -> Option<Tensor<T>> {
        self.grads
            .get(id)?
            .as_ref()
            .map(|g| Tensor::new(&self.shapes[id], g.clone()).expect("gradient shape matches node"))
    }

    /// Gradient of `var`, zeros when it did not influence the loss.
    pub fn get_or_zeros(&self, var: Var<'_, T>) -> Tensor<T> {
        self.get(var)
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.id]))
    }

    /// Borrowed gradient buffer of node `id`.
    pub fn slice(&self, id: usize) -> Option<&[T]> {
        self.grads.get(id)?.as_deref()
    }
}
