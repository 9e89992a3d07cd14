// SPDX-License-Identifier: MIT OR Apache-2.0

//! Implicitly parameterised long-convolution filters: a small sine MLP over
//! positional features, optionally multiplied by a fixed exponential window.

use std::f64::consts::PI;

use tensor::{Real, Tensor, Var};

use super::params::{Init, Scope};
use crate::error::Result;

pub const EMB_DIM: usize = 3;
const WINDOW_TARGET: f64 = 1e-2;
const FAST_DECAY_PCT: f64 = 0.3;
const SLOW_DECAY_PCT: f64 = 1.5;
const WINDOW_SHIFT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitFilter {
    pub l_max: usize,
    pub width: usize,
    pub hidden: usize,
    /// Number of hidden sine layers (at least 1).
    pub depth: usize,
    pub window: bool,
}

impl ImplicitFilter {
    /// Hyena: order-64 MLP with two sine layers and the decay window.
    pub fn hyena(l_max: usize, width: usize, order: usize) -> Self {
        Self {
            l_max,
            width,
            hidden: order,
            depth: 2,
            window: true,
        }
    }

    /// BaseConv/Based long conv: width-16 MLP, one sine layer, no window.
    pub fn baseconv(l_max: usize, width: usize) -> Self {
        Self {
            l_max,
            width,
            hidden: 16,
            depth: 1,
            window: false,
        }
    }

    pub fn init(&self, init: &mut Init<'_>) -> Result<()> {
        let mut s = init.scope("filter");
        let mut n_in = EMB_DIM;
        for i in 0..self.depth {
            let mut l = s.scope(&format!("mlp.{i}"));
            let bound = 1.0 / (n_in as f64).sqrt();
            l.uniform("weight", &[n_in, self.hidden], bound)?;
            l.uniform("bias", &[self.hidden], bound)?;
            n_in = self.hidden;
        }
        s.uniform(
            "out.weight",
            &[n_in, self.width],
            1.0 / (n_in as f64).sqrt(),
        )
    }

    /// Lag-indexed filter `[t_len, width]`.
    pub fn forward<'t, T: Real>(
        &self,
        scope: &Scope<'_, 't, T>,
        t_len: usize,
    ) -> Result<Var<'t, T>> {
        let s = scope.scope("filter");
        let mut h = s.tape.constant(positional_features(self.l_max, t_len));
        for i in 0..self.depth {
            h = s.linear(&format!("mlp.{i}"), h)?.sin();
        }
        let k = h.matmul(s.param("out.weight")?)?;
        if self.window {
            let w = s.tape.constant(decay_window(self.l_max, t_len, self.width));
            Ok(k.mul(w)?)
        } else {
            Ok(k)
        }
    }
}

/// `[t, cos(2 pi f t'), -sin(2 pi f t')]` rows for the first `t_len` of `l_max` positions.
pub fn positional_features<T: Real>(l_max: usize, t_len: usize) -> Tensor<T> {
    let bands = (EMB_DIM - 1) / 2;
    let denom = (l_max.max(2) - 1) as f64;
    let freqs: Vec<f64> = if bands == 1 {
        vec![1e-4]
    } else {
        (0..bands)
            .map(|b| 1e-4 + (bands as f64 - 1.0 - 1e-4) * b as f64 / (bands - 1) as f64)
            .collect()
    };
    let mut data = Vec::with_capacity(t_len * EMB_DIM);
    for i in 0..t_len {
        data.push(T::of(i as f64 / denom));
        let w = 2.0 * PI * i as f64 / l_max as f64;
        data.extend(freqs.iter().map(|f| T::of((f * w).cos())));
        data.extend(freqs.iter().map(|f| T::of(-(f * w).sin())));
    }
    Tensor::new(&[t_len, EMB_DIM], data).expect("feature shape")
}

/// `exp(-t |delta_c|) + shift` with per-channel decay rates.
pub fn decay_window<T: Real>(l_max: usize, t_len: usize, width: usize) -> Tensor<T> {
    let lo = WINDOW_TARGET.ln() / SLOW_DECAY_PCT;
    let hi = WINDOW_TARGET.ln() / FAST_DECAY_PCT;
    let denom = (l_max.max(2) - 1) as f64;
    let step = if width > 1 {
        (hi - lo) / (width - 1) as f64
    } else {
        0.0
    };
    Tensor::from_fn(&[t_len, width], |i| {
        let (t, c) = (i / width, i % width);
        let delta = (lo + step * c as f64).abs();
        T::of((-(t as f64 / denom) * delta).exp() + WINDOW_SHIFT)
    })
}
