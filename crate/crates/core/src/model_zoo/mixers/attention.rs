// SPDX-License-Identifier: MIT OR Apache-2.0

//! Single-head causal softmax attention.

use tensor::{Real, Var};

use super::Ctx;
use crate::error::Result;
use crate::model_zoo::params::Init;

pub fn init(d: usize, init: &mut Init<'_>) -> Result<()> {
    for name in ["q_proj", "k_proj", "v_proj", "out_proj"] {
        init.linear(name, d, d, true)?;
    }
    Ok(())
}

pub fn forward<'t, T: Real>(ctx: &mut Ctx<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let s = &ctx.s;
    let q = s.linear("q_proj", x)?;
    let k = s.linear("k_proj", x)?;
    let v = s.linear("v_proj", x)?;
    let y = s.tape.causal_attention(q, k, v)?;
    s.linear("out_proj", y)
}
