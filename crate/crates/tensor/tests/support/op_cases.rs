// SPDX-License-Identifier: MIT OR Apache-2.0

//! Random-case generators and functions for finite-difference checks of
//! every differentiable op.

#![allow(dead_code)]

use tensor::gradcheck::{check, GradcheckReport};
use tensor::{Result, Rng, Tape, Tensor, Var};

pub const CASES: u64 = 100;
pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-6;

pub type Gen = fn(&mut Rng) -> Vec<Tensor<f64>>;
pub type Func = for<'t> fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>;

pub struct OpCase {
    pub name: &'static str,
    pub gen: Gen,
    pub f: Func,
}

/// Worst report over `n` random cases of `case`.
pub fn run(case: &OpCase, n: u64) -> std::result::Result<GradcheckReport, String> {
    let mut worst = GradcheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        n_checked: 0,
    };
    for i in 0..n {
        let mut rng = Rng::labelled(17, &[case.name.len() as u64, i]);
        let inputs = (case.gen)(&mut rng);
        let r = check(&inputs, H, i, case.f).map_err(|e| format!("{}: {e}", case.name))?;
        worst.max_rel_err = worst.max_rel_err.max(r.max_rel_err);
        worst.max_abs_err = worst.max_abs_err.max(r.max_abs_err);
        worst.n_checked += r.n_checked;
    }
    Ok(worst)
}

pub fn find(name: &str) -> OpCase {
    cases()
        .into_iter()
        .find(|c| c.name == name)
        .expect("known case")
}

fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng)
}

fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn seq(rng: &mut Rng) -> (usize, usize, usize) {
    (dim(rng, 1, 2), dim(rng, 1, 5), dim(rng, 1, 4))
}

pub fn cases() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "matmul",
            gen: |r| {
                let (m, k, n) = (dim(r, 1, 5), dim(r, 1, 5), dim(r, 1, 4));
                vec![randn(r, &[m, k]), randn(r, &[k, n])]
            },
            f: |_, v| v[0].matmul(v[1]),
        },
        OpCase {
            name: "batched_matmul",
            gen: |r| vec![randn(r, &[2, 3, 4]), randn(r, &[4, 2])],
            f: |_, v| v[0].matmul(v[1]),
        },
        OpCase {
            name: "binary_same_shape",
            gen: |r| {
                let mut b = Tensor::rand_uniform(&[3, 4], 0.5, 2.0, r);
                let sign = if r.uniform() < 0.5 { -1.0 } else { 1.0 };
                b = b.map(|x| x * sign);
                vec![randn(r, &[3, 4]), randn(r, &[3, 4]), b]
            },
            f: |_, v| v[0].add(v[1])?.mul(v[0])?.sub(v[1])?.div(v[2]),
        },
        OpCase {
            name: "binary_broadcast",
            gen: |r| {
                vec![
                    randn(r, &[2, 3, 4]),
                    randn(r, &[4]),
                    Tensor::rand_uniform(&[3, 1], 0.5, 2.0, r),
                ]
            },
            f: |_, v| v[0].mul(v[1])?.add(v[1])?.div(v[2]),
        },
        OpCase {
            name: "broadcast_leading_operand",
            gen: |r| vec![randn(r, &[4]), randn(r, &[3, 4])],
            f: |_, v| v[0].sub(v[1])?.mul(v[0]),
        },
        OpCase {
            name: "unary_ops",
            gen: |r| vec![randn(r, &[2, 8])],
            f: |_, v| {
                let x = v[0];
                let parts = [
                    x.scale(0.5).exp(),
                    x.silu(),
                    x.gelu(),
                    x.sigmoid(),
                    x.softplus(),
                    x.sin(),
                    x.neg(),
                    x.square(),
                ];
                let mut acc = parts[0];
                for p in &parts[1..] {
                    acc = acc.add(*p)?.mul(x.scale(0.25).sigmoid())?;
                }
                Ok(acc)
            },
        },
        OpCase {
            name: "silu",
            gen: |r| vec![randn(r, &[2, 8])],
            f: |_, v| Ok(v[0].silu()),
        },
        OpCase {
            name: "reductions_and_reshapes",
            gen: |r| vec![randn(r, &[2, 3, 4])],
            f: |_, v| {
                let x = v[0].reshape(&[6, 4])?;
                let s = x.sum_last().reshape(&[2, 3])?;
                s.square().mean().add(v[0].sum())
            },
        },
        OpCase {
            name: "narrow_and_concat",
            gen: |r| vec![randn(r, &[3, 5]), randn(r, &[3, 2])],
            f: |t, v| {
                let a = v[0].narrow_last(1, 3)?;
                let b = v[0].narrow_last(0, 2)?.mul(v[1])?;
                t.concat_last(&[a, b, v[1]])
            },
        },
        OpCase {
            name: "transpose",
            gen: |r| vec![randn(r, &[3, 4]), randn(r, &[3, 2])],
            f: |_, v| v[0].transpose()?.matmul(v[1]),
        },
        OpCase {
            name: "embedding_gather_splice",
            gen: |r| vec![randn(r, &[5, 3])],
            f: |t, v| {
                let e = t.embedding(v[0], &[1, 4, 1, 0], &[2, 2])?;
                let g = e.gather_rows(&[3, 0, 0])?;
                let patch = Tensor::from_f64(&[1, 3], &[0.1, -0.2, 0.3])?;
                let s = e.splice_rows(&[2], &patch)?;
                g.sum().add(s.square().sum())
            },
        },
        OpCase {
            name: "softmax_axes",
            gen: |r| vec![randn(r, &[3, 5])],
            f: |_, v| {
                let a = v[0].softmax(1)?;
                let b = v[0].softmax(0)?;
                a.mul(b)
            },
        },
        OpCase {
            name: "layer_norm",
            gen: |r| vec![randn(r, &[2, 6]), randn(r, &[6]), randn(r, &[6])],
            f: |_, v| v[0].layer_norm(v[1], v[2]),
        },
        OpCase {
            name: "l2_normalize",
            gen: |r| vec![randn(r, &[3, 4])],
            f: |_, v| Ok(v[0].l2_normalize()),
        },
        OpCase {
            name: "causal_conv1d",
            gen: |r| {
                let (b, t, d) = seq(r);
                let k = dim(r, 1, 4);
                vec![randn(r, &[b, t, d]), randn(r, &[k, d]), randn(r, &[d])]
            },
            f: |_, v| {
                let with_bias = v[0].causal_conv1d(v[1], Some(v[2]))?;
                let without = v[0].causal_conv1d(v[1], None)?;
                with_bias.mul(without)
            },
        },
        OpCase {
            name: "causal_conv1d_t6_d3_k4",
            gen: |r| vec![randn(r, &[6, 3]), randn(r, &[4, 3])],
            f: |_, v| v[0].causal_conv1d(v[1], None),
        },
        OpCase {
            name: "long_conv",
            gen: |r| {
                let (b, t, d) = seq(r);
                let l = t + dim(r, 0, 2);
                vec![randn(r, &[b, t, d]), randn(r, &[l, d])]
            },
            f: |_, v| v[0].long_conv(v[1]),
        },
        OpCase {
            name: "scan",
            gen: |r| {
                let t = dim(r, 1, 20);
                let shape = [2, t, 3];
                vec![Tensor::rand_uniform(&shape, -1.0, 1.0, r), randn(r, &shape)]
            },
            f: |_, v| v[0].scan(v[1], 1),
        },
        OpCase {
            name: "selective_scan",
            gen: |r| {
                let (b, t, d) = seq(r);
                let n = dim(r, 1, 3);
                vec![
                    randn(r, &[b, t, d]),
                    Tensor::rand_uniform(&[b, t, d], 0.1, 1.0, r),
                    Tensor::rand_uniform(&[d, n], -2.0, -0.2, r),
                    randn(r, &[b, t, n]),
                    randn(r, &[b, t, n]),
                ]
            },
            f: |t, v| t.selective_scan(v[0], v[1], v[2], v[3], v[4]),
        },
        OpCase {
            name: "causal_attention",
            gen: |r| {
                let (b, t, f) = seq(r);
                let dv = dim(r, 1, 3);
                vec![
                    randn(r, &[b, t, f]),
                    randn(r, &[b, t, f]),
                    randn(r, &[b, t, dv]),
                ]
            },
            f: |t, v| t.causal_attention(v[0], v[1], v[2]),
        },
        OpCase {
            name: "taylor_attention",
            gen: |r| {
                let (b, t, f) = seq(r);
                let dv = dim(r, 1, 3);
                vec![
                    randn(r, &[b, t, f]),
                    randn(r, &[b, t, f]),
                    randn(r, &[b, t, dv]),
                ]
            },
            f: |t, v| t.taylor_attention(v[0], v[1], v[2]),
        },
        OpCase {
            name: "kernel_attention",
            gen: |r| {
                let (b, t, f) = seq(r);
                let dv = dim(r, 1, 3);
                vec![
                    randn(r, &[b, t, f]),
                    randn(r, &[b, t, f]),
                    randn(r, &[b, t, dv]),
                    randn(r, &[t + 1, dv]),
                ]
            },
            f: |t, v| t.kernel_attention(v[0], v[1], v[2], v[3]),
        },
        OpCase {
            name: "delta_rule",
            gen: |r| {
                let (b, t, dk) = seq(r);
                let dv = dim(r, 1, 3);
                vec![
                    randn(r, &[b, t, dk]),
                    randn(r, &[b, t, dk]),
                    randn(r, &[b, t, dv]),
                    randn(r, &[b, t, 1]),
                ]
            },
            f: |t, v| {
                let k = v[1].l2_normalize();
                t.delta_rule(v[0], k, v[2], v[3].sigmoid())
            },
        },
        OpCase {
            name: "cross_entropy_masked",
            gen: |r| vec![randn(r, &[4, 6])],
            f: |_, v| v[0].cross_entropy_masked(&[1, 5, 0, 3], &[true, false, true, false]),
        },
    ]
}
