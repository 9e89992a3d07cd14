// SPDX-License-Identifier: MIT OR Apache-2.0

//! Central finite-difference gradient checking at 64-bit precision.

use crate::error::Result;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor for relative error, so near-zero gradients compare absolutely.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub n_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare analytic and numeric gradients of `f(inputs)`.
///
/// A non-scalar output is reduced to `sum(w * y)` with fixed random weights
/// drawn from `seed`, so every output element contributes.
pub fn check<F>(inputs: &[Tensor<f64>], h: f64, seed: u64, f: F) -> Result<GradcheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let y = f(&tape, &vars)?;
        project(&tape, y, seed)?.value().item()
    };
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|x| tape.param(x)).collect();
    let y = f(&tape, &vars)?;
    let loss = project(&tape, y, seed)?;
    let grads = tape.backward(loss)?;
    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        n_checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var);
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[j];
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            report.max_rel_err = report.max_rel_err.max(relative_error(a, numeric));
            report.n_checked += 1;
        }
    }
    Ok(report)
}

fn project<'t>(tape: &'t Tape<f64>, y: Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    let shape = y.shape();
    if shape.iter().product::<usize>() == 1 && shape.len() <= 1 {
        return Ok(y);
    }
    let mut rng = Rng::new(seed, 0x9c);
    let w = tape.constant(Tensor::randn(&shape, 1.0, &mut rng));
    Ok(y.mul(w)?.sum())
}
