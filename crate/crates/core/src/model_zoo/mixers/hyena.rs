// SPDX-License-Identifier: MIT OR Apache-2.0

//! Order-2 Hyena operator.
//!
//! `in_proj` gives three streams, each passed through a width-3 short conv
//! (the `conv_out` site). With streams `x0, x1, v`:
//! `y = x0 * (h * (x1 * v) + bias * (x1 * v))`, `h` an implicit long filter.

use tensor::{Real, Var};

use super::Ctx;
use crate::error::Result;
use crate::model_zoo::capture::Site;
use crate::model_zoo::config::HyenaConfig;
use crate::model_zoo::filter::ImplicitFilter;
use crate::model_zoo::params::Init;

pub fn init(cfg: &HyenaConfig, d: usize, init: &mut Init<'_>) -> Result<()> {
    init.linear("in_proj", d, 3 * d, true)?;
    init.conv("short_filter", cfg.short_filter_order, 3 * d, true)?;
    ImplicitFilter::hyena(cfg.l_max, d, cfg.filter_order).init(init)?;
    init.normal("filter_bias", &[d], 1.0)?;
    init.linear("out_proj", d, d, true)
}

pub fn forward<'t, T: Real>(
    cfg: &HyenaConfig,
    ctx: &mut Ctx<'_, 't, T>,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let shape = x.shape();
    let (t_len, d) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let u = ctx.s.linear("in_proj", x)?;
    let u = ctx.s.conv("short_filter", u)?;
    let u = ctx.visit(Site::ConvOut, u)?;
    let s = &ctx.s;
    let x0 = u.narrow_last(0, d)?;
    let x1 = u.narrow_last(d, d)?;
    let v = u.narrow_last(2 * d, d)?.mul(x1)?;
    let h = ImplicitFilter::hyena(cfg.l_max, d, cfg.filter_order).forward(s, t_len)?;
    let y = v.long_conv(h)?.add(v.mul(s.param("filter_bias")?)?)?;
    s.linear("out_proj", y.mul(x0)?)
}
