// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use tensor::ops::scan::{scan_blocked, scan_sequential};
use tensor::{Result, Rng, Tape, Tensor, Var};

type SeqOp = for<'t> fn(&'t Tape<f64>, Var<'t, f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>;

fn conv<'t>(_: &'t Tape<f64>, x: Var<'t, f64>, p: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
    x.causal_conv1d(p[0], Some(p[1]))
}
fn long<'t>(_: &'t Tape<f64>, x: Var<'t, f64>, p: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
    x.long_conv(p[2])
}
fn scan<'t>(_: &'t Tape<f64>, x: Var<'t, f64>, _p: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
    x.sigmoid().scan(x, 1)
}
fn softmax_attn<'t>(
    t: &'t Tape<f64>,
    x: Var<'t, f64>,
    _p: &[Var<'t, f64>],
) -> Result<Var<'t, f64>> {
    t.causal_attention(x, x.sin(), x.square())
}
fn taylor<'t>(t: &'t Tape<f64>, x: Var<'t, f64>, _p: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
    t.taylor_attention(x, x.sin(), x.square())
}
fn kernel<'t>(t: &'t Tape<f64>, x: Var<'t, f64>, p: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
    t.kernel_attention(x, x.sin(), x, p[2])
}
fn ssm<'t>(t: &'t Tape<f64>, x: Var<'t, f64>, p: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
    t.selective_scan(x, x.softplus(), p[3], x.sin(), x.neg())
}
fn delta<'t>(t: &'t Tape<f64>, x: Var<'t, f64>, _p: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
    let beta = x.sum_last().reshape(&[1, x.shape()[1], 1])?.sigmoid();
    t.delta_rule(x.sin(), x.l2_normalize(), x.square(), beta)
}

const OPS: [(&str, SeqOp); 8] = [
    ("conv", conv),
    ("long_conv", long),
    ("scan", scan),
    ("attention", softmax_attn),
    ("taylor", taylor),
    ("kernel", kernel),
    ("selective_scan", ssm),
    ("delta", delta),
];

fn run_op(op: SeqOp, x: &Tensor<f64>, seed: u64) -> Vec<f64> {
    let d = x.shape()[2];
    let tl = x.shape()[1];
    let mut rng = Rng::new(seed, 1);
    let tape = Tape::new();
    let params = [
        tape.constant(Tensor::randn(&[3, d], 1.0, &mut rng)),
        tape.constant(Tensor::randn(&[d], 1.0, &mut rng)),
        tape.constant(Tensor::randn(&[tl, d], 1.0, &mut rng)),
        tape.constant(Tensor::rand_uniform(&[d, d], -1.0, -0.1, &mut rng)),
    ];
    op(&tape, tape.constant(x.clone()), &params)
        .unwrap()
        .value()
        .data()
        .to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbing_position_t_leaves_earlier_outputs_unchanged(
        seed in any::<u64>(), tl in 2usize..9, d in 1usize..4, pos_frac in 0.0f64..1.0, bump in 0.1f64..3.0,
    ) {
        let pos = ((tl as f64) * pos_frac) as usize % tl;
        let mut rng = Rng::new(seed, 0);
        let x = Tensor::<f64>::randn(&[1, tl, d], 1.0, &mut rng);
        let mut y = x.clone();
        for c in 0..d {
            y.data_mut()[pos * d + c] += bump;
        }
        for (name, op) in OPS {
            let a = run_op(op, &x, seed);
            let b = run_op(op, &y, seed);
            let w = a.len() / tl;
            prop_assert_eq!(&a[..pos * w], &b[..pos * w], "{} at {}", name, pos);
        }
    }

    #[test]
    fn blocked_scan_equals_sequential(seed in any::<u64>(), steps in 1usize..40, inner in 1usize..4) {
        let mut rng = Rng::new(seed, 0);
        let n = steps * inner;
        let a: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let s = scan_sequential(&a, &b, 1, steps, inner);
        let p = scan_blocked(&a, &b, 1, steps, inner);
        for (x, y) in s.iter().zip(&p) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), rows in 1usize..5, n in 1usize..7, scale in 0.1f64..50.0) {
        let mut rng = Rng::new(seed, 0);
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::randn(&[rows, n], scale, &mut rng));
        let y = x.softmax(1).unwrap();
        for row in y.value().data().chunks(n) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_length_matches_shape(dims in proptest::collection::vec(1usize..5, 0..4), extra in 1usize..3) {
        let n: usize = dims.iter().product();
        prop_assert!(Tensor::<f32>::new(&dims, vec![0.0; n]).is_ok());
        prop_assert!(Tensor::<f32>::new(&dims, vec![0.0; n + extra]).is_err());
    }

    #[test]
    fn gradients_match_parameter_shapes(seed in any::<u64>(), m in 1usize..5, k in 1usize..5, n in 1usize..5) {
        let mut rng = Rng::new(seed, 0);
        let tape = Tape::new();
        let w = tape.leaf(Tensor::<f64>::randn(&[k, n], 1.0, &mut rng));
        let b = tape.leaf(Tensor::<f64>::randn(&[n], 1.0, &mut rng));
        let x = tape.constant(Tensor::randn(&[m, k], 1.0, &mut rng));
        let loss = x.matmul(w).unwrap().add(b).unwrap().gelu().sum();
        let g = tape.backward(loss).unwrap();
        prop_assert_eq!(g.get(w).unwrap().shape().to_vec(), vec![k, n]);
        prop_assert_eq!(g.get(b).unwrap().shape().to_vec(), vec![n]);
    }
}

#[test]
fn same_seed_and_stream_give_identical_tensors() {
    let run = || {
        let mut rng = Rng::new(42, 7);
        let tape = Tape::new();
        let x = tape.leaf(Tensor::<f64>::randn(&[4, 6], 1.0, &mut rng));
        let w = tape.leaf(Tensor::<f64>::randn(&[6, 3], 1.0, &mut rng));
        let y = x.matmul(w).unwrap().softmax(1).unwrap();
        let g = tape.backward(y.square().sum()).unwrap();
        (y.value().data().to_vec(), g.get(w).unwrap().into_data())
    };
    let (a, b) = (run(), run());
    assert_eq!(
        a.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(
        a.1.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.1.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn unused_leaf_has_no_gradient() {
    let tape = Tape::<f64>::new();
    let used = tape.leaf(Tensor::ones(&[2]));
    let unused = tape.leaf(Tensor::ones(&[2]));
    let g = tape.backward(used.square().sum()).unwrap();
    assert!(g.get(used).is_some());
    assert!(g.get(unused).is_none());
    assert_eq!(g.get_or_zeros(unused).data(), &[0.0, 0.0]);
}

#[test]
fn f32_and_f64_agree_on_a_small_graph() {
    let mut rng = Rng::new(3, 3);
    let x64 = Tensor::<f64>::randn(&[1, 5, 3], 1.0, &mut rng);
    let x32: Tensor<f32> = x64.cast();
    let t64 = Tape::new();
    let t32 = Tape::new();
    let a = t64
        .causal_attention(
            t64.constant(x64.clone()),
            t64.constant(x64.clone()),
            t64.constant(x64),
        )
        .unwrap();
    let b = t32
        .causal_attention(
            t32.constant(x32.clone()),
            t32.constant(x32.clone()),
            t32.constant(x32),
        )
        .unwrap();
    let diff = a.value().max_abs_diff(&b.value().cast()).unwrap();
    assert!(diff < 1e-5);
}
