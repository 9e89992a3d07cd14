// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gated convolution `y = proj(u) * conv(u)`.
//!
//! Layer `i` uses `kernel_size[i % len]`: a positive width is a short causal
//! conv (the `conv_out` site), `-1` a long conv over the whole sequence.

use tensor::{Real, Var};

use super::Ctx;
use crate::error::Result;
use crate::model_zoo::capture::Site;
use crate::model_zoo::config::BaseConvConfig;
use crate::model_zoo::filter::ImplicitFilter;
use crate::model_zoo::params::{Init, INIT_STD};

pub fn kernel_for(cfg: &BaseConvConfig, layer: usize) -> i64 {
    cfg.kernel_size[layer % cfg.kernel_size.len()]
}

pub fn init(cfg: &BaseConvConfig, d: usize, layer: usize, init: &mut Init<'_>) -> Result<()> {
    init.linear("projection", d, d, true)?;
    match kernel_for(cfg, layer) {
        -1 if cfg.implicit_long_conv => ImplicitFilter::baseconv(cfg.l_max, d).init(init),
        -1 => init.normal("filter", &[cfg.l_max, d], INIT_STD),
        k => init.conv("conv", k as usize, d, true),
    }
}

pub fn forward<'t, T: Real>(
    cfg: &BaseConvConfig,
    ctx: &mut Ctx<'_, 't, T>,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let t_len = x.shape()[x.shape().len() - 2];
    let conv = match kernel_for(cfg, ctx.layer) {
        -1 if cfg.implicit_long_conv => {
            let f = ImplicitFilter::baseconv(cfg.l_max, *x.shape().last().expect("rank"));
            x.long_conv(f.forward(&ctx.s, t_len)?)?
        }
        -1 => x.long_conv(ctx.s.param("filter")?)?,
        _ => {
            let c = ctx.s.conv("conv", x)?;
            ctx.visit(Site::ConvOut, c)?
        }
    };
    let y = ctx.s.linear("projection", x)?.mul(conv)?;
    Ok(if cfg.use_act { y.gelu() } else { y })
}
