// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hybrid of gated convolutions (even layers) and linear attention with a
//! second-order Taylor feature map (odd layers).
//!
//! Convolution layers compute `proj(u) * long(short(u))`; either stage can be
//! switched off for ablations. Attention layers project queries and keys to
//! `feature_dim` and use the quadratic view of the Taylor kernel.

use tensor::{Real, Var};

use super::Ctx;
use crate::error::Result;
use crate::model_zoo::capture::Site;
use crate::model_zoo::config::BasedConfig;
use crate::model_zoo::filter::ImplicitFilter;
use crate::model_zoo::params::Init;

pub fn init(cfg: &BasedConfig, d: usize, layer: usize, init: &mut Init<'_>) -> Result<()> {
    if layer.is_multiple_of(2) {
        init.linear("projection", d, d, true)?;
        if let Some(k) = cfg.kernel_size {
            init.conv("conv", k, d, true)?;
        }
        if cfg.implicit_long_conv {
            ImplicitFilter::baseconv(cfg.l_max, d).init(init)?;
        }
        Ok(())
    } else {
        init.linear("q_proj", d, cfg.feature_dim, false)?;
        init.linear("k_proj", d, cfg.feature_dim, false)?;
        init.linear("v_proj", d, d, false)?;
        init.linear("out_proj", d, d, false)
    }
}

pub fn forward<'t, T: Real>(
    cfg: &BasedConfig,
    ctx: &mut Ctx<'_, 't, T>,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    if ctx.layer.is_multiple_of(2) {
        let shape = x.shape();
        let (t_len, d) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let mut u = x;
        if cfg.kernel_size.is_some() {
            let c = ctx.s.conv("conv", u)?;
            u = ctx.visit(Site::ConvOut, c)?;
        }
        if cfg.implicit_long_conv {
            let f = ImplicitFilter::baseconv(cfg.l_max, d);
            u = u.long_conv(f.forward(&ctx.s, t_len)?)?;
        }
        let y = ctx.s.linear("projection", x)?.mul(u)?;
        Ok(if cfg.use_act { y.gelu() } else { y })
    } else {
        let s = &ctx.s;
        let q = s.linear("q_proj", x)?;
        let k = s.linear("k_proj", x)?;
        let v = s.linear("v_proj", x)?;
        let y = s.tape.taylor_attention(q, k, v)?;
        s.linear("out_proj", y)
    }
}
