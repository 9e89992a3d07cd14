// SPDX-License-Identifier: MIT OR Apache-2.0

//! LM backbone, sequence mixers and named activation sites.

pub mod capture;
pub mod checkpoint;
pub mod config;
pub mod filter;
pub mod mixers;
pub mod model;
pub mod params;

pub use capture::{CapturePoint, Hooks, Patch, Site};
pub use checkpoint::{Checkpoint, NamedTensor, Provenance};
pub use config::{
    AttentionConfig, BackboneConfig, BaseConvConfig, BasedConfig, DeltaNetConfig, H3Config,
    HyenaConfig, MambaConfig, MixerConfig, MixerKind,
};
pub use model::{Batch, Model, PAD_ID};
pub use params::{ParamSet, ParamVars};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub mixer: MixerKind,
    pub d_model: usize,
    pub n_layers: usize,
    pub vocab_size: usize,
    pub n_params: usize,
}

/// Parameter counts for every mixer at each width, with default mixer settings.
pub fn param_count_table(
    dims: &[usize],
    n_layers: usize,
    vocab_size: usize,
) -> Result<Vec<ParamCount>> {
    let mut out = Vec::new();
    for kind in MixerKind::ALL {
        for &d in dims {
            let cfg = BackboneConfig::new(kind, d, n_layers, vocab_size);
            out.push(ParamCount {
                mixer: kind,
                d_model: d,
                n_layers,
                vocab_size,
                n_params: Model::<f64>::init(&cfg, 0)?.n_params(),
            });
        }
    }
    Ok(out)
}
