// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named activation sites, with optional capture and row patching.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tensor::{Real, Tensor, Var};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    BlockIn,
    /// Sequence-mixer input, after the pre-norm.
    MixerIn,
    /// Output of the mixer's short convolution and its activation.
    ConvOut,
    MixerOut,
    StateMixerIn,
    StateMixerOut,
    BlockOut,
}

impl Site {
    pub const ALL: [Site; 7] = [
        Site::BlockIn,
        Site::MixerIn,
        Site::ConvOut,
        Site::MixerOut,
        Site::StateMixerIn,
        Site::StateMixerOut,
        Site::BlockOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Site::BlockIn => "block_in",
            Site::MixerIn => "mixer_in",
            Site::ConvOut => "conv_out",
            Site::MixerOut => "mixer_out",
            Site::StateMixerIn => "state_mixer_in",
            Site::StateMixerOut => "state_mixer_out",
            Site::BlockOut => "block_out",
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Site::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown capture site `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CapturePoint {
    pub layer: usize,
    pub site: Site,
}

impl CapturePoint {
    pub fn new(layer: usize, site: Site) -> Self {
        Self { layer, site }
    }
}

impl fmt::Display for CapturePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layers.{}.{}", self.layer, self.site)
    }
}

/// Overwrite `rows` (flattened `batch * T` indices) at `point` with `values[rows.len(), width]`.
#[derive(Debug, Clone)]
pub struct Patch<T: Real> {
    pub point: CapturePoint,
    pub rows: Vec<usize>,
    pub values: Tensor<T>,
}

/// Per-call capture cache and patch list.
#[derive(Debug, Clone)]
pub struct Hooks<T: Real> {
    capture: bool,
    cache: BTreeMap<CapturePoint, Tensor<T>>,
    patches: Vec<Patch<T>>,
    applied: BTreeSet<usize>,
}

impl<T: Real> Default for Hooks<T> {
    fn default() -> Self {
        Self::none()
    }
}

impl<T: Real> Hooks<T> {
    pub fn none() -> Self {
        Self {
            capture: false,
            cache: BTreeMap::new(),
            patches: Vec::new(),
            applied: BTreeSet::new(),
        }
    }

    pub fn capturing() -> Self {
        Self {
            capture: true,
            ..Self::none()
        }
    }

    pub fn with_patches(mut self, patches: Vec<Patch<T>>) -> Self {
        self.patches = patches;
        self
    }

    pub fn cache(&self) -> &BTreeMap<CapturePoint, Tensor<T>> {
        &self.cache
    }

    pub fn into_cache(self) -> BTreeMap<CapturePoint, Tensor<T>> {
        self.cache
    }

    /// Apply any patches for `point`, then record the (patched) value.
    pub(crate) fn visit<'t>(
        &mut self,
        point: CapturePoint,
        mut x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        for (i, p) in self.patches.iter().enumerate() {
            if p.point == point {
                x = x.splice_rows(&p.rows, &p.values)?;
                self.applied.insert(i);
            }
        }
        if self.capture {
            self.cache.insert(point, (*x.value()).clone());
        }
        Ok(x)
    }

    /// Error if a patch named a point the forward pass never reached.
    pub(crate) fn check_applied(&self, mixer: &str) -> Result<()> {
        match (0..self.patches.len()).find(|i| !self.applied.contains(i)) {
            Some(i) => Err(Error::UnsupportedAddress {
                mixer: mixer.to_string(),
                site: self.patches[i].point.to_string(),
            }),
            None => Ok(()),
        }
    }
}
