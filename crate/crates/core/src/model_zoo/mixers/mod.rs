// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sequence mixers and the position-wise MLP.
//!
//! Every mixer maps `[B, T, d] -> [B, T, d]` causally. Weights are stored
//! `[in, out]`; parameter names are relative to `layers.{i}.mixer`.

pub mod attention;
pub mod baseconv;
pub mod based;
pub mod deltanet;
pub mod h3;
pub mod hyena;
pub mod mamba;
pub mod mlp;

use tensor::{Real, Var};

use super::capture::{CapturePoint, Hooks, Site};
use super::config::MixerConfig;
use super::params::{Init, Scope};
use crate::error::Result;

/// Forward state for one mixer call.
pub struct Ctx<'a, 't, T: Real> {
    pub s: Scope<'a, 't, T>,
    pub hooks: &'a mut Hooks<T>,
    pub layer: usize,
}

impl<'t, T: Real> Ctx<'_, 't, T> {
    pub fn visit(&mut self, site: Site, x: Var<'t, T>) -> Result<Var<'t, T>> {
        self.hooks.visit(CapturePoint::new(self.layer, site), x)
    }
}

pub fn init(cfg: &MixerConfig, d: usize, layer: usize, init: &mut Init<'_>) -> Result<()> {
    match cfg {
        MixerConfig::Attention(_) => attention::init(d, init),
        MixerConfig::Baseconv(c) => baseconv::init(c, d, layer, init),
        MixerConfig::Based(c) => based::init(c, d, layer, init),
        MixerConfig::Hyena(c) => hyena::init(c, d, init),
        MixerConfig::H3(c) => h3::init(c, d, init),
        MixerConfig::Mamba(c) => mamba::init(c, d, init),
        MixerConfig::Deltanet(c) => deltanet::init(c, d, init),
    }
}

pub fn forward<'t, T: Real>(
    cfg: &MixerConfig,
    ctx: &mut Ctx<'_, 't, T>,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    match cfg {
        MixerConfig::Attention(_) => attention::forward(ctx, x),
        MixerConfig::Baseconv(c) => baseconv::forward(c, ctx, x),
        MixerConfig::Based(c) => based::forward(c, ctx, x),
        MixerConfig::Hyena(c) => hyena::forward(c, ctx, x),
        MixerConfig::H3(c) => h3::forward(c, ctx, x),
        MixerConfig::Mamba(c) => mamba::forward(c, ctx, x),
        MixerConfig::Deltanet(c) => deltanet::forward(c, ctx, x),
    }
}

/// Whether layer `layer` of this mixer has a short convolution exposing `conv_out`.
pub fn has_conv_out(cfg: &MixerConfig, layer: usize) -> bool {
    match cfg {
        MixerConfig::Attention(_) | MixerConfig::H3(_) => false,
        MixerConfig::Baseconv(c) => baseconv::kernel_for(c, layer) > 0,
        MixerConfig::Based(c) => layer.is_multiple_of(2) && c.kernel_size.is_some(),
        MixerConfig::Hyena(_) => true,
        MixerConfig::Mamba(_) => true,
        MixerConfig::Deltanet(c) => c.conv_size.is_some(),
    }
}
