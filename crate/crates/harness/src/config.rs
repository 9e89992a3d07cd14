// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration: one JSON document per recipe and scale.

use anyhow::{anyhow, bail, Context, Result};
use mechrecall::model_zoo::{BackboneConfig, MixerKind};
use mechrecall::tasks::{ArParams, AtrParams};
use mechrecall::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use tensor::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            other => bail!("unknown scale `{other}` (expected paper or desk)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskBlock {
    Ar(ArParams),
    Atr {
        params: AtrParams,
        /// Hold out this fraction of (query, answer) pairs for the test split.
        #[serde(default)]
        holdout_fraction: Option<f64>,
    },
}

impl TaskBlock {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ar(_) => "ar",
            Self::Atr { .. } => "atr",
        }
    }
}

/// A named architecture variant: dotted-path overrides of the backbone config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub set: Map<String, Value>,
}

impl Variant {
    pub fn default_variant() -> Self {
        Self {
            name: "default".into(),
            set: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelGrid {
    pub mixers: Vec<MixerKind>,
    pub d_models: Vec<usize>,
    pub n_layers: Vec<usize>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::default_variant()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub lrs: Vec<f64>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub precision: Precision,
}

fn default_batch() -> usize {
    32
}
fn default_warmup() -> f64 {
    0.1
}
fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}
fn default_eps() -> f64 {
    1e-8
}

impl TrainBlock {
    pub fn train_config(&self, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            lr_peak: lr,
            betas: self.betas,
            eps: self.eps,
            weight_decay: self.weight_decay,
            warmup_fraction: self.warmup_fraction,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            precision: self.precision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionBlock {
    pub n_examples: usize,
    /// Layer whose block input decides the mechanism label.
    #[serde(default)]
    pub classify_layer: Option<usize>,
    /// Also restore each layer's mixer output at the query token.
    #[serde(default)]
    pub mixer_output_query: bool,
}

impl Default for InterventionBlock {
    fn default() -> Self {
        Self {
            n_examples: mechrecall::interventions::DEFAULT_N_EXAMPLES,
            classify_layer: None,
            mixer_output_query: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Defaults to `$MECHRECALL_OUT/{name}-{scale}`; not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<std::path::PathBuf>,
    pub scale: Scale,
    pub seed: u64,
    pub task: TaskBlock,
    pub models: ModelGrid,
    pub train: TrainBlock,
    #[serde(default)]
    pub intervention: InterventionBlock,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v).map_err(|e| anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.models;
        if m.mixers.is_empty()
            || m.d_models.is_empty()
            || m.n_layers.is_empty()
            || m.variants.is_empty()
        {
            bail!("models: mixers, d_models, n_layers and variants must be non-empty");
        }
        if self.train.lrs.is_empty() || self.train.seeds.is_empty() {
            bail!("train: lrs and seeds must be non-empty");
        }
        self.train
            .train_config(self.train.lrs[0], 0)
            .validate()
            .map_err(|e| anyhow!("train: {e}"))?;
        let mut names: Vec<&str> = m.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!("models.variants: duplicate variant name");
        }
        for &kind in &m.mixers {
            for &d in &m.d_models {
                for &l in &m.n_layers {
                    for v in &m.variants {
                        self.backbone(kind, d, l, v, 2).with_context(|| {
                            format!("models: {kind} d={d} layers={l} variant {}", v.name)
                        })?;
                    }
                }
            }
        }
        match &self.task {
            TaskBlock::Ar(p) if p.n_train == 0 || p.n_eval == 0 => {
                bail!("task: n_train and n_eval must be positive")
            }
            TaskBlock::Atr { params, .. } => {
                params.pcfg.validate().map_err(|e| anyhow!("task: {e}"))?
            }
            _ => {}
        }
        Ok(())
    }

    /// Backbone for one grid point with the variant's overrides applied.
    pub fn backbone(
        &self,
        kind: MixerKind,
        d: usize,
        layers: usize,
        v: &Variant,
        vocab: usize,
    ) -> Result<BackboneConfig> {
        let base = BackboneConfig::new(kind, d, layers, vocab);
        let mut value = serde_json::to_value(&base)?;
        for (path, x) in &v.set {
            set_path(&mut value, path, x.clone())?;
        }
        let cfg: BackboneConfig =
            serde_json::from_value(value).map_err(|e| anyhow!("variant {}: {e}", v.name))?;
        cfg.validate()
            .map_err(|e| anyhow!("variant {}: {e}", v.name))?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Set `a.b.c` inside a JSON object, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &str, x: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!("`{}` is not an object", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), x);
            return Ok(());
        }
        cur = obj
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// Apply `key=value` overrides; values parse as JSON, falling back to strings.
pub fn apply_overrides(root: &mut Value, sets: &[String]) -> Result<()> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{s}` is not key=value"))?;
        let x = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        set_path(root, k.trim(), x)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_then_strings() {
        let mut v = serde_json::json!({"train": {"epochs": 3}});
        apply_overrides(
            &mut v,
            &["train.epochs=5".into(), "name=x".into(), "a.b=[1,2]".into()],
        )
        .unwrap();
        assert_eq!(v["train"]["epochs"], 5);
        assert_eq!(v["name"], "x");
        assert_eq!(v["a"]["b"], serde_json::json!([1, 2]));
        assert!(apply_overrides(&mut v, &["noequals".into()]).is_err());
    }
}
