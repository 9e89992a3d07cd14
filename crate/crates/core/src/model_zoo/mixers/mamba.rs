// SPDX-License-Identifier: MIT OR Apache-2.0

//! Selective state-space mixer.
//!
//! `in_proj` splits into a main branch `x` and a gate `z`. The main branch
//! goes through a depthwise causal conv of width `d_conv` (skipped when
//! `None`) and SiLU, which is the `conv_out` site. A selective scan with
//! input-dependent `dt`, `B`, `C` and a `D` skip follows, gated by `silu(z)`.

use tensor::{Real, Tensor, Var};

use super::Ctx;
use crate::error::Result;
use crate::model_zoo::capture::Site;
use crate::model_zoo::config::MambaConfig;
use crate::model_zoo::params::Init;

const DT_MIN: f64 = 1e-3;
const DT_MAX: f64 = 1e-1;
const DT_FLOOR: f64 = 1e-4;

pub struct Dims {
    pub inner: usize,
    pub state: usize,
    pub dt_rank: usize,
}

pub fn dims(cfg: &MambaConfig, d: usize) -> Dims {
    Dims {
        inner: cfg.expand * d,
        state: cfg.d_state,
        dt_rank: cfg.dt_rank.unwrap_or_else(|| d.div_ceil(16)),
    }
}

pub fn init(cfg: &MambaConfig, d: usize, init: &mut Init<'_>) -> Result<()> {
    let Dims {
        inner,
        state,
        dt_rank,
    } = dims(cfg, d);
    init.linear("in_proj", d, 2 * inner, false)?;
    if let Some(k) = cfg.d_conv {
        init.conv("conv1d", k, inner, true)?;
    }
    init.linear("x_proj", inner, dt_rank + 2 * state, false)?;
    let std = (dt_rank as f64).powf(-0.5);
    init.uniform("dt_proj.weight", &[dt_rank, inner], std)?;
    // bias = softplus^-1(dt), dt log-uniform in [DT_MIN, DT_MAX]
    let mut rng = init.rng("dt_proj.bias");
    let bias = Tensor::from_fn(&[inner], |_| {
        let u = rng.uniform();
        let dt = (u * (DT_MAX.ln() - DT_MIN.ln()) + DT_MIN.ln())
            .exp()
            .max(DT_FLOOR);
        dt + (-(-dt).exp_m1()).ln()
    });
    init.tensor("dt_proj.bias", bias)?;
    let a_log = Tensor::from_fn(&[inner, state], |i| ((i % state) as f64 + 1.0).ln());
    init.tensor("A_log", a_log)?;
    init.ones("D", &[inner])?;
    init.linear("out_proj", inner, d, false)
}

pub fn forward<'t, T: Real>(
    cfg: &MambaConfig,
    ctx: &mut Ctx<'_, 't, T>,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let d = *x.shape().last().expect("rank >= 1");
    let Dims {
        inner,
        state,
        dt_rank,
    } = dims(cfg, d);
    let xz = ctx.s.linear("in_proj", x)?;
    let mut u = xz.narrow_last(0, inner)?;
    let z = xz.narrow_last(inner, inner)?;
    if cfg.d_conv.is_some() {
        u = ctx.s.conv("conv1d", u)?;
    }
    let u = ctx.visit(Site::ConvOut, u.silu())?;
    let s = &ctx.s;
    let dbl = s.linear("x_proj", u)?;
    let dt = s
        .linear("dt_proj", dbl.narrow_last(0, dt_rank)?)?
        .softplus();
    let b = dbl.narrow_last(dt_rank, state)?;
    let c = dbl.narrow_last(dt_rank + state, state)?;
    let a = s.param("A_log")?.exp().neg();
    let y = s.tape.selective_scan(u, dt, a, b, c)?;
    let y = y.add(u.mul(s.param("D")?)?)?;
    let y = y.mul(z.silu())?;
    s.linear("out_proj", y)
}
