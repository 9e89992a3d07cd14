// SPDX-License-Identifier: MIT OR Apache-2.0

//! Single-head DeltaNet.
//!
//! A fused q/k/v projection passes through an optional depthwise short conv
//! and SiLU (the `conv_out` site). Queries and keys are L2-normalised,
//! `beta = sigmoid(b_proj(x))`, and the delta rule
//! `S_t = S_{t-1} (I - beta k k^T) + beta v k^T`, `o_t = S_t q_t` follows.

use tensor::{Real, Var};

use super::Ctx;
use crate::error::Result;
use crate::model_zoo::capture::Site;
use crate::model_zoo::config::DeltaNetConfig;
use crate::model_zoo::params::Init;

pub fn init(cfg: &DeltaNetConfig, d: usize, init: &mut Init<'_>) -> Result<()> {
    init.linear("qkv_proj", d, 3 * d, false)?;
    if let Some(k) = cfg.conv_size {
        init.conv("conv", k, 3 * d, false)?;
    }
    init.linear("b_proj", d, 1, false)?;
    init.linear("out_proj", d, d, false)
}

pub fn forward<'t, T: Real>(
    cfg: &DeltaNetConfig,
    ctx: &mut Ctx<'_, 't, T>,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let d = *x.shape().last().expect("rank");
    let mut qkv = ctx.s.linear("qkv_proj", x)?;
    if cfg.conv_size.is_some() {
        qkv = ctx.s.conv("conv", qkv)?.silu();
        qkv = ctx.visit(Site::ConvOut, qkv)?;
    } else {
        qkv = qkv.silu();
    }
    let s = &ctx.s;
    let q = qkv.narrow_last(0, d)?.l2_normalize();
    let k = qkv.narrow_last(d, d)?.l2_normalize();
    let v = qkv.narrow_last(2 * d, d)?;
    let beta = s.linear("b_proj", x)?.sigmoid();
    let o = s.tape.delta_rule(q, k, v, beta)?;
    s.linear("out_proj", o)
}
