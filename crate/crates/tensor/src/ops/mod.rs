// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod attention;
pub mod conv;
pub mod delta;
pub mod elementwise;
pub mod loss;
pub mod matmul;
pub mod norm;
pub mod scan;
pub mod shape;
pub mod ssm;

use crate::real::Real;
use crate::tape::{GradAcc, Op};
use crate::tensor::Tensor;

/// Route `grad` (the gradient of the node's output) to the node's parents.
pub(crate) fn backward<T: Real>(op: &Op<T>, out: &Tensor<T>, grad: &[T], acc: &mut GradAcc<'_, T>) {
    match op {
        Op::Leaf => {}
        Op::Binary { kind, a, b, bcast } => {
            elementwise::binary_backward(*kind, *a, *b, bcast, grad, acc)
        }
        Op::Unary { kind, a } => elementwise::unary_backward(*kind, *a, out, grad, acc),
        Op::Scale { a, factor } => elementwise::scale_backward(*a, *factor, grad, acc),
        Op::MatMul { a, b, m, k, n } => matmul::backward(*a, *b, (*m, *k, *n), grad, acc),
        Op::SumAll { a } => shape::sum_all_backward(*a, grad, acc),
        Op::SumLast { a } => shape::sum_last_backward(*a, grad, acc),
        Op::Reshape { a } => shape::passthrough_backward(*a, grad, acc),
        Op::Transpose { a, rows, cols } => shape::transpose_backward(*a, (*rows, *cols), grad, acc),
        Op::NarrowLast { a, start } => shape::narrow_backward(*a, *start, out, grad, acc),
        Op::ConcatLast { parts } => shape::concat_backward(parts, out, grad, acc),
        Op::Embedding { table, ids } => shape::embedding_backward(*table, ids, grad, acc),
        Op::GatherRows { a, rows } => shape::gather_backward(*a, rows, grad, acc),
        Op::SpliceRows { a, rows } => shape::splice_backward(*a, rows, grad, acc),
        Op::Softmax { a, outer, n, inner } => {
            norm::softmax_backward(*a, (*outer, *n, *inner), out, grad, acc)
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            mean,
            rstd,
        } => norm::layer_norm_backward(*x, *gain, *bias, mean, rstd, grad, acc),
        Op::L2Normalize { a, norms } => norm::l2_backward(*a, norms, out, grad, acc),
        Op::CausalConv { x, kernel, bias } => {
            conv::causal_conv_backward(*x, *kernel, *bias, grad, acc)
        }
        Op::LongConv { x, filter } => conv::long_conv_backward(*x, *filter, grad, acc),
        Op::Scan {
            a,
            b,
            outer,
            steps,
            inner,
        } => scan::scan_backward(*a, *b, (*outer, *steps, *inner), out, grad, acc),
        Op::SelectiveScan {
            x,
            dt,
            a,
            b,
            c,
            states,
            decays,
        } => ssm::selective_scan_backward([*x, *dt, *a, *b, *c], states, decays, grad, acc),
        Op::CausalAttention { q, k, v, probs } => {
            attention::causal_attention_backward([*q, *k, *v], probs, grad, acc)
        }
        Op::TaylorAttention { q, k, v, denom } => {
            attention::taylor_attention_backward([*q, *k, *v], denom, out, grad, acc)
        }
        Op::KernelAttention { q, k, v, kernel } => {
            attention::kernel_attention_backward([*q, *k, *v, *kernel], grad, acc)
        }
        Op::DeltaRule {
            q,
            k,
            v,
            beta,
            states,
        } => delta::delta_rule_backward([*q, *k, *v, *beta], states, grad, acc),
        Op::CrossEntropy {
            logits,
            rows,
            probs,
        } => loss::cross_entropy_backward(*logits, rows, probs, grad, acc),
    }
}
