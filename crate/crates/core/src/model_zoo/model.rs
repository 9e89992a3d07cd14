// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-norm LM backbone shared by every mixer.
//!
//! `x = embed(tokens) (+ pos)`, then per layer
//! `x += mixer(LN(x))` and, unless the mixer is Mamba, `x += mlp(LN(x))`,
//! followed by a final LayerNorm and an untied, bias-free output head.

use std::collections::BTreeMap;

use tensor::{Real, Tape, Tensor, Var};

use super::capture::{CapturePoint, Hooks, Site};
use super::config::BackboneConfig;
use super::mixers::{self, mlp, Ctx};
use super::params::{Init, ParamSet, ParamVars, Scope, INIT_STD};
use crate::error::{Error, Result};
use crate::tasks::Document;

/// Right-padded token batch, `[batch, seq_len]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub tokens: Vec<usize>,
    pub batch: usize,
    pub seq_len: usize,
    pub lengths: Vec<usize>,
}

pub const PAD_ID: usize = 0;

impl Batch {
    pub fn from_sequences<S: AsRef<[usize]>>(seqs: &[S]) -> Self {
        let seq_len = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        let mut tokens = vec![PAD_ID; seqs.len() * seq_len];
        for (b, s) in seqs.iter().enumerate() {
            let s = s.as_ref();
            tokens[b * seq_len..b * seq_len + s.len()].copy_from_slice(s);
        }
        Self {
            tokens,
            batch: seqs.len(),
            seq_len,
            lengths: seqs.iter().map(|s| s.as_ref().len()).collect(),
        }
    }

    pub fn from_documents(docs: &[&Document]) -> Self {
        let seqs: Vec<&[usize]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
        Self::from_sequences(&seqs)
    }

    /// Flattened row index of position `t` in sequence `b`.
    pub fn row(&self, b: usize, t: usize) -> usize {
        b * self.seq_len + t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real> {
    pub config: BackboneConfig,
    pub params: ParamSet<T>,
}

impl<T: Real> Model<T> {
    /// Fresh weights; initialisation is done in 64-bit and depends only on
    /// `(config, seed)`.
    pub fn init(config: &BackboneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::<f64>::default();
        let mut init = Init::new(seed, &mut params);
        let d = config.d_model;
        init.normal("embedding.weight", &[config.vocab_size, d], INIT_STD)?;
        if config.use_abs_pos_emb {
            init.normal("pos_embedding.weight", &[config.max_seq_len, d], INIT_STD)?;
        }
        for layer in 0..config.n_layers {
            let mut l = init.scope(&format!("layers.{layer}"));
            l.layer_norm("norm1", d)?;
            mixers::init(&config.mixer, d, layer, &mut l.scope("mixer"))?;
            if config.has_mlp {
                l.layer_norm("norm2", d)?;
                mlp::init(d, &mut l.scope("mlp"))?;
            }
        }
        init.layer_norm("norm_f", d)?;
        if !config.tie_embeddings {
            init.normal("lm_head.weight", &[d, config.vocab_size], INIT_STD)?;
        }
        Ok(Self {
            config: config.clone(),
            params: params.cast(),
        })
    }

    pub fn from_params(config: BackboneConfig, params: ParamSet<T>) -> Result<Self> {
        let reference = Model::<f64>::init(&config, 0)?;
        if reference.params.names() != params.names() {
            return Err(Error::Checkpoint(
                "parameter names do not match the configuration".into(),
            ));
        }
        for ((name, a), b) in reference.params.iter().zip(params.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.numel()
    }

    /// Every capture point this model exposes.
    pub fn capture_points(&self) -> Vec<CapturePoint> {
        let mut out = Vec::new();
        for layer in 0..self.config.n_layers {
            for site in Site::ALL {
                let p = CapturePoint::new(layer, site);
                if self.supports(p) {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn supports(&self, p: CapturePoint) -> bool {
        p.layer < self.config.n_layers
            && match p.site {
                Site::StateMixerIn | Site::StateMixerOut => self.config.has_mlp,
                Site::ConvOut => mixers::has_conv_out(&self.config.mixer, p.layer),
                _ => true,
            }
    }

    pub fn check_address(&self, p: CapturePoint) -> Result<()> {
        if self.supports(p) {
            Ok(())
        } else {
            Err(Error::UnsupportedAddress {
                mixer: self.config.kind().to_string(),
                site: p.to_string(),
            })
        }
    }

    /// Logits at the flattened `rows` (`[rows.len(), V]`), or at every
    /// position (`[batch * seq_len, V]`) when `rows` is `None`.
    pub fn forward_batch<'t>(
        &self,
        tape: &'t Tape<T>,
        vars: &ParamVars<'t, T>,
        batch: &Batch,
        rows: Option<&[usize]>,
        hooks: &mut Hooks<T>,
    ) -> Result<Var<'t, T>> {
        let cfg = &self.config;
        if batch.seq_len > cfg.max_seq_len {
            return Err(Error::config(format!(
                "sequence length {} exceeds max_seq_len {}",
                batch.seq_len, cfg.max_seq_len
            )));
        }
        if batch.batch == 0 || batch.seq_len == 0 {
            return Err(Error::config("empty batch"));
        }
        let root = Scope::root(tape, vars);
        let (b, t_len, d) = (batch.batch, batch.seq_len, cfg.d_model);
        let mut x = tape.embedding(root.param("embedding.weight")?, &batch.tokens, &[b, t_len])?;
        if cfg.use_abs_pos_emb {
            let positions: Vec<usize> = (0..t_len).collect();
            x = x.add(
                root.param("pos_embedding.weight")?
                    .gather_rows(&positions)?,
            )?;
        }
        for layer in 0..cfg.n_layers {
            let s = root.scope(&format!("layers.{layer}"));
            let at = |site| CapturePoint::new(layer, site);
            x = hooks.visit(at(Site::BlockIn), x)?;
            let h = hooks.visit(at(Site::MixerIn), s.layer_norm("norm1", x)?)?;
            let mut ctx = Ctx {
                s: s.scope("mixer"),
                hooks: &mut *hooks,
                layer,
            };
            let m = mixers::forward(&cfg.mixer, &mut ctx, h)?;
            let m = hooks.visit(at(Site::MixerOut), m)?;
            x = x.add(m)?;
            if cfg.has_mlp {
                let h = hooks.visit(at(Site::StateMixerIn), s.layer_norm("norm2", x)?)?;
                let f = mlp::forward(&s.scope("mlp"), h)?;
                let f = hooks.visit(at(Site::StateMixerOut), f)?;
                x = x.add(f)?;
            }
            x = hooks.visit(at(Site::BlockOut), x)?;
        }
        hooks.check_applied(cfg.kind().name())?;
        let x = match rows {
            Some(rows) => x.gather_rows(rows)?,
            None => x.reshape(&[b * t_len, d])?,
        };
        let x = root.layer_norm("norm_f", x)?;
        let head = if cfg.tie_embeddings {
            root.param("embedding.weight")?.transpose()?
        } else {
            root.param("lm_head.weight")?
        };
        Ok(x.matmul(head)?)
    }

    /// Logits `[T, V]` for one sequence and the activation at every capture point.
    pub fn forward(
        &self,
        tokens: &[usize],
    ) -> Result<(Tensor<T>, BTreeMap<CapturePoint, Tensor<T>>)> {
        let tape = Tape::new();
        let vars = self.params.load(&tape, false);
        let mut hooks = Hooks::capturing();
        let batch = Batch::from_sequences(&[tokens]);
        let logits = self.forward_batch(&tape, &vars, &batch, None, &mut hooks)?;
        let logits = (*logits.value()).clone();
        Ok((logits, hooks.into_cache()))
    }

    /// Softmax probabilities at the given rows, without recording gradients.
    pub fn probabilities(
        &self,
        batch: &Batch,
        rows: &[usize],
        hooks: &mut Hooks<T>,
    ) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let vars = self.params.load(&tape, false);
        let logits = self.forward_batch(&tape, &vars, batch, Some(rows), hooks)?;
        Ok((*logits.softmax(1)?.value()).clone())
    }
}
