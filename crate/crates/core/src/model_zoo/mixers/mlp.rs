// SPDX-License-Identifier: MIT OR Apache-2.0

//! Position-wise feed-forward state mixer, expansion 2, GELU.

use tensor::{Real, Var};

use crate::error::Result;
use crate::model_zoo::params::{Init, Scope};

pub const EXPANSION: usize = 2;

pub fn init(d: usize, init: &mut Init<'_>) -> Result<()> {
    init.linear("fc1", d, EXPANSION * d, true)?;
    init.linear("fc2", EXPANSION * d, d, true)
}

pub fn forward<'t, T: Real>(s: &Scope<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let h = s.linear("fc1", x)?.gelu();
    s.linear("fc2", h)
}
