// SPDX-License-Identifier: MIT OR Apache-2.0

//! H3 with one head spanning the model width.
//!
//! Keys pass through a shift SSM, a per-channel FIR filter over the last
//! `d_state` steps whose lag-0 tap is the skip term `D`. A diagonal SSM
//! (S4D-Real initialisation) then mixes the key-value products:
//! `y_t[j] = sum_{s<=t} K[t-s, j] (q_t . k_s) v_s[j]` with
//! `K[l, j] = dt_j sum_n C[j, n] exp(-dt_j a[j, n] l)`.

use tensor::{Real, Tensor, Var};

use super::Ctx;
use crate::error::Result;
use crate::model_zoo::config::H3Config;
use crate::model_zoo::params::{Init, Scope};

const DT_MIN: f64 = 1e-3;
const DT_MAX: f64 = 1e-1;

pub fn init(cfg: &H3Config, d: usize, init: &mut Init<'_>) -> Result<()> {
    let n = cfg.d_state;
    for name in ["q_proj", "k_proj", "v_proj"] {
        init.linear(name, d, d, true)?;
    }
    init.normal("shift.kernel", &[n + 1, d], 1.0)?;
    let mut rng = init.rng("ssm.log_dt");
    let log_dt = Tensor::from_fn(&[d], |_| rng.uniform_range(DT_MIN.ln(), DT_MAX.ln()));
    init.tensor("ssm.log_dt", log_dt)?;
    init.tensor(
        "ssm.log_a",
        Tensor::from_fn(&[d, n], |i| ((i % n) as f64 + 1.0).ln()),
    )?;
    init.normal("ssm.C", &[d, n], 1.0 / (n as f64).sqrt())?;
    init.linear("out_proj", d, d, true)
}

/// Shift-SSM as a causal conv over taps `0..=min(d_state, T - 1)`.
pub fn shift_ssm<'t, T: Real>(s: &Scope<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let kernel = s.param("shift.kernel")?;
    let t_len = x.shape()[x.shape().len() - 2];
    let taps = kernel.shape()[0].min(t_len.max(1));
    // conv kernels put the current token last, so reverse the lag order
    let rows: Vec<usize> = (0..taps).rev().collect();
    Ok(x.causal_conv1d(kernel.gather_rows(&rows)?, None)?)
}

/// Lag-indexed diagonal SSM kernel `[t_len, d]`.
pub fn ssm_kernel<'t, T: Real>(s: &Scope<'_, 't, T>, t_len: usize) -> Result<Var<'t, T>> {
    let log_a = s.param("ssm.log_a")?;
    let (d, n) = (log_a.shape()[0], log_a.shape()[1]);
    let dt = s.param("ssm.log_dt")?.exp();
    let rate = dt
        .reshape(&[d, 1])?
        .mul(log_a.exp())?
        .reshape(&[1, d * n])?;
    let lags = s
        .tape
        .constant(Tensor::from_fn(&[t_len, 1], |i| T::of(i as f64)));
    let decay = lags.matmul(rate)?.neg().exp().reshape(&[t_len, d, n])?;
    Ok(decay.mul(s.param("ssm.C")?)?.sum_last().mul(dt)?)
}

pub fn forward<'t, T: Real>(
    _cfg: &H3Config,
    ctx: &mut Ctx<'_, 't, T>,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let s = &ctx.s;
    let t_len = x.shape()[x.shape().len() - 2];
    let q = s.linear("q_proj", x)?;
    let k = shift_ssm(s, s.linear("k_proj", x)?)?;
    let v = s.linear("v_proj", x)?;
    let y = s.tape.kernel_attention(q, k, v, ssm_kernel(s, t_len)?)?;
    s.linear("out_proj", y)
}
