// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_SEQ_LEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixerKind {
    Attention,
    Baseconv,
    Based,
    Hyena,
    H3,
    Mamba,
    Deltanet,
}

impl MixerKind {
    pub const ALL: [MixerKind; 7] = [
        MixerKind::Attention,
        MixerKind::Baseconv,
        MixerKind::Based,
        MixerKind::Hyena,
        MixerKind::H3,
        MixerKind::Mamba,
        MixerKind::Deltanet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MixerKind::Attention => "attention",
            MixerKind::Baseconv => "baseconv",
            MixerKind::Based => "based",
            MixerKind::Hyena => "hyena",
            MixerKind::H3 => "h3",
            MixerKind::Mamba => "mamba",
            MixerKind::Deltanet => "deltanet",
        }
    }

    pub fn default_config(self) -> MixerConfig {
        match self {
            MixerKind::Attention => MixerConfig::Attention(AttentionConfig::default()),
            MixerKind::Baseconv => MixerConfig::Baseconv(BaseConvConfig::default()),
            MixerKind::Based => MixerConfig::Based(BasedConfig::default()),
            MixerKind::Hyena => MixerConfig::Hyena(HyenaConfig::default()),
            MixerKind::H3 => MixerConfig::H3(H3Config::default()),
            MixerKind::Mamba => MixerConfig::Mamba(MambaConfig::default()),
            MixerKind::Deltanet => MixerConfig::Deltanet(DeltaNetConfig::default()),
        }
    }
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MixerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MixerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown mixer kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    pub num_heads: usize,
    pub dropout: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            num_heads: 1,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyenaConfig {
    pub l_max: usize,
    pub filter_order: usize,
    pub num_heads: usize,
    pub num_blocks: usize,
    pub outer_mixing: bool,
    pub dropout: f64,
    pub filter_dropout: f64,
    pub short_filter_order: usize,
    pub bidirectional: bool,
}

impl Default for HyenaConfig {
    fn default() -> Self {
        Self {
            l_max: 1024,
            filter_order: 64,
            num_heads: 1,
            num_blocks: 1,
            outer_mixing: false,
            dropout: 0.0,
            filter_dropout: 0.0,
            short_filter_order: 3,
            bidirectional: false,
        }
    }
}

/// `kernel_size[layer % len]`; `-1` selects a long convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseConvConfig {
    pub l_max: usize,
    pub kernel_size: Vec<i64>,
    pub implicit_long_conv: bool,
    pub use_act: bool,
}

impl Default for BaseConvConfig {
    fn default() -> Self {
        Self {
            l_max: 1024,
            kernel_size: vec![3, -1],
            implicit_long_conv: true,
            use_act: false,
        }
    }
}

/// Even layers are gated convolutions, odd layers Taylor linear attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasedConfig {
    pub l_max: usize,
    /// Short conv width in the convolution layers; `None` removes it.
    pub kernel_size: Option<usize>,
    pub implicit_long_conv: bool,
    pub use_act: bool,
    pub feature_dim: usize,
    pub num_key_value_heads: usize,
    pub num_heads: usize,
    pub feature_name: String,
    pub train_view: String,
}

impl Default for BasedConfig {
    fn default() -> Self {
        Self {
            l_max: 1024,
            kernel_size: Some(3),
            implicit_long_conv: true,
            use_act: false,
            feature_dim: 8,
            num_key_value_heads: 1,
            num_heads: 1,
            feature_name: "taylor_exp".into(),
            train_view: "quadratic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct H3Config {
    pub l_max: usize,
    pub d_state: usize,
    /// Values at or above `d_model` mean one head spanning the model width.
    pub head_dim: usize,
}

impl Default for H3Config {
    fn default() -> Self {
        Self {
            l_max: 1024,
            d_state: 1024,
            head_dim: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MambaConfig {
    /// Short conv width; `None` deletes the convolution.
    pub d_conv: Option<usize>,
    pub d_state: usize,
    pub expand: usize,
    /// `None` means `ceil(d_model / 16)`.
    pub dt_rank: Option<usize>,
}

impl Default for MambaConfig {
    fn default() -> Self {
        Self {
            d_conv: Some(4),
            d_state: 16,
            expand: 2,
            dt_rank: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaNetConfig {
    pub num_heads: usize,
    /// Short conv width on the q/k/v projections; `None` disables it.
    pub conv_size: Option<usize>,
}

impl Default for DeltaNetConfig {
    fn default() -> Self {
        Self {
            num_heads: 1,
            conv_size: Some(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mixer_kind", content = "mixer_config", rename_all = "lowercase")]
pub enum MixerConfig {
    Attention(AttentionConfig),
    Baseconv(BaseConvConfig),
    Based(BasedConfig),
    Hyena(HyenaConfig),
    H3(H3Config),
    Mamba(MambaConfig),
    Deltanet(DeltaNetConfig),
}

impl MixerConfig {
    pub fn kind(&self) -> MixerKind {
        match self {
            MixerConfig::Attention(_) => MixerKind::Attention,
            MixerConfig::Baseconv(_) => MixerKind::Baseconv,
            MixerConfig::Based(_) => MixerKind::Based,
            MixerConfig::Hyena(_) => MixerKind::Hyena,
            MixerConfig::H3(_) => MixerKind::H3,
            MixerConfig::Mamba(_) => MixerKind::Mamba,
            MixerConfig::Deltanet(_) => MixerKind::Deltanet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub vocab_size: usize,
    #[serde(default = "default_max_seq_len")]
    pub max_seq_len: usize,
    #[serde(default = "default_true")]
    pub use_abs_pos_emb: bool,
    /// Share the token embedding with the output head.
    #[serde(default)]
    pub tie_embeddings: bool,
    #[serde(flatten)]
    pub mixer: MixerConfig,
    pub has_mlp: bool,
}

fn default_max_seq_len() -> usize {
    DEFAULT_MAX_SEQ_LEN
}

fn default_true() -> bool {
    true
}

impl BackboneConfig {
    /// Default mixer settings; Mamba blocks carry no MLP.
    pub fn new(kind: MixerKind, d_model: usize, n_layers: usize, vocab_size: usize) -> Self {
        Self {
            d_model,
            n_layers,
            vocab_size,
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
            use_abs_pos_emb: true,
            tie_embeddings: false,
            mixer: kind.default_config(),
            has_mlp: kind != MixerKind::Mamba,
        }
    }

    pub fn kind(&self) -> MixerKind {
        self.mixer.kind()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if self.d_model == 0 {
            return bad("d_model must be positive".into());
        }
        if !(1..=3).contains(&self.n_layers) {
            return bad(format!("n_layers must be 1, 2 or 3, got {}", self.n_layers));
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 {
            return bad("vocab_size and max_seq_len must be positive".into());
        }
        let d = self.d_model;
        match &self.mixer {
            MixerConfig::Attention(c) => {
                if c.num_heads != 1 || c.dropout != 0.0 {
                    return bad("attention supports one head and no dropout".into());
                }
            }
            MixerConfig::Hyena(c) => {
                if c.num_heads != 1 || c.num_blocks != 1 || c.bidirectional || c.outer_mixing {
                    return bad(
                        "hyena supports one head, one block, causal, no outer mixing".into(),
                    );
                }
                if c.dropout != 0.0 || c.filter_dropout != 0.0 {
                    return bad("hyena dropout must be 0".into());
                }
                if c.short_filter_order == 0 || c.filter_order == 0 {
                    return bad("hyena filter orders must be positive".into());
                }
                if c.l_max < self.max_seq_len {
                    return bad("hyena l_max must cover max_seq_len".into());
                }
            }
            MixerConfig::Baseconv(c) => {
                if c.kernel_size.is_empty() || c.kernel_size.iter().any(|&k| k == 0 || k < -1) {
                    return bad("baseconv kernel_size entries must be positive or -1".into());
                }
                if c.l_max < self.max_seq_len {
                    return bad("baseconv l_max must cover max_seq_len".into());
                }
            }
            MixerConfig::Based(c) => {
                if c.num_heads != 1 || c.num_key_value_heads != 1 {
                    return bad("based supports one head".into());
                }
                if c.feature_name != "taylor_exp" || c.train_view != "quadratic" {
                    return bad(
                        "based supports feature_name taylor_exp and train_view quadratic".into(),
                    );
                }
                if c.feature_dim == 0 || c.kernel_size == Some(0) {
                    return bad("based feature_dim and kernel_size must be positive".into());
                }
                if c.l_max < self.max_seq_len {
                    return bad("based l_max must cover max_seq_len".into());
                }
            }
            MixerConfig::H3(c) => {
                if c.d_state == 0 {
                    return bad("h3 d_state must be positive".into());
                }
                if c.head_dim < d {
                    return bad(format!(
                        "h3 head_dim {} < d_model {d}: multi-head H3 is not supported",
                        c.head_dim
                    ));
                }
            }
            MixerConfig::Mamba(c) => {
                if c.d_conv == Some(0) || c.d_state == 0 || c.expand == 0 || c.dt_rank == Some(0) {
                    return bad("mamba sizes must be positive".into());
                }
                if self.has_mlp {
                    return bad("mamba blocks have no MLP".into());
                }
            }
            MixerConfig::Deltanet(c) => {
                if c.num_heads != 1 || c.conv_size == Some(0) {
                    return bad("deltanet supports one head and a positive conv size".into());
                }
            }
        }
        Ok(())
    }
}
