// SPDX-License-Identifier: MIT OR Apache-2.0

//! Query-masked language-model training, evaluation and LR sweeps.

pub mod eval;
pub mod optim;
pub mod schedule;
pub mod sweep;

use std::io::Write;

use serde::{Deserialize, Serialize};
use tensor::{Precision, Real, Rng, Tape};

pub use eval::{evaluate, EvalRecord, EvalResult};
pub use optim::{AdamW, AdamWConfig};
pub use schedule::{lr_at, lr_ladder};
pub use sweep::{select_best, RunRecord, RunStatus};

use crate::error::{Error, Result};
use crate::model_zoo::{BackboneConfig, Batch, Checkpoint, Hooks, Model, Provenance};
use crate::tasks::{Document, Splits};

/// Stream label for the per-epoch shuffle.
const SHUFFLE: u64 = 0x5348;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_peak: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_peak: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
            warmup_fraction: 0.1,
            epochs: 16,
            batch_size: 32,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn total_steps(&self, n_train: usize) -> usize {
        self.epochs * n_train.div_ceil(self.batch_size.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_peak > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "lr_peak, epochs and batch_size must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("warmup_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_likelihood: f64,
    pub dev_accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun<T: Real> {
    pub model: Model<T>,
    pub log: Vec<EpochRecord>,
    /// Set when the loss became non-finite; training stops at that step.
    pub failed: Option<String>,
}

/// Cross-entropy of the answer at each document's query position, averaged over the batch.
pub fn batch_loss<'t, T: Real>(
    model: &Model<T>,
    tape: &'t Tape<T>,
    vars: &crate::model_zoo::ParamVars<'t, T>,
    docs: &[&Document],
) -> Result<tensor::Var<'t, T>> {
    let batch = Batch::from_documents(docs);
    let rows: Vec<usize> = docs
        .iter()
        .enumerate()
        .map(|(b, d)| batch.row(b, d.query_pos))
        .collect();
    let logits = model.forward_batch(tape, vars, &batch, Some(&rows), &mut Hooks::none())?;
    let pairs: Vec<(usize, usize)> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (i, d.answer_id))
        .collect();
    Ok(logits.cross_entropy_rows(&pairs)?)
}

/// Train `model` on `data.train`, evaluating on `data.dev` after every epoch.
///
/// Each completed epoch's record is also written to `log_sink` when given.
pub fn train<T: Real>(
    mut model: Model<T>,
    data: &Splits,
    cfg: &TrainConfig,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<TrainRun<T>> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let total = cfg.total_steps(data.train.len());
    let mut opt = AdamW::new(cfg.adamw(), model.params.tensors());
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        Rng::labelled(cfg.seed, &[SHUFFLE, epoch as u64]).shuffle(&mut order);
        let (mut loss_sum, mut n_batches, mut lr) = (0.0, 0usize, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let docs: Vec<&Document> = chunk.iter().map(|&i| &data.train[i]).collect();
            let tape = Tape::new();
            let vars = model.params.load(&tape, true);
            let loss = batch_loss(&model, &tape, &vars, &docs)?;
            let value = loss.value().item()?.f64();
            if !value.is_finite() {
                return Ok(TrainRun {
                    model,
                    log,
                    failed: Some(format!(
                        "non-finite loss at epoch {} step {step}",
                        epoch + 1
                    )),
                });
            }
            let grads = tape.backward(loss)?;
            let g: Vec<_> = vars.vars().iter().map(|&v| grads.get_or_zeros(v)).collect();
            drop(vars);
            lr = lr_at(step, total, cfg.lr_peak, cfg.warmup_fraction);
            opt.step(lr, model.params.tensors_mut(), &g);
            loss_sum += value;
            n_batches += 1;
            step += 1;
        }
        let dev = evaluate(&model, &data.dev)?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / n_batches as f64,
            dev_likelihood: dev.likelihood,
            dev_accuracy: dev.accuracy,
            lr,
        };
        if let Some(sink) = log_sink.as_deref_mut() {
            writeln!(sink, "{}", serde_json::to_string(&rec)?)?;
        }
        log.push(rec);
    }
    let failed = model
        .params
        .tensors()
        .iter()
        .any(|t| t.data().iter().any(|x| !x.f64().is_finite()))
        .then(|| "non-finite parameters after training".to_string());
    Ok(TrainRun { model, log, failed })
}

/// Result of [`train_checkpoint`]: the final weights plus the log.
#[derive(Debug, Clone)]
pub struct TrainedCheckpoint {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
}

/// Initialise from `(backbone, cfg.seed)`, train at `cfg.precision`, and package the result.
pub fn train_checkpoint(
    backbone: &BackboneConfig,
    data: &Splits,
    cfg: &TrainConfig,
    task: &str,
    log_sink: Option<&mut dyn Write>,
) -> Result<TrainedCheckpoint> {
    fn run<T: Real>(
        backbone: &BackboneConfig,
        data: &Splits,
        cfg: &TrainConfig,
        task: &str,
        sink: Option<&mut dyn Write>,
    ) -> Result<TrainedCheckpoint> {
        let model = Model::<T>::init(backbone, cfg.seed)?;
        let r = train(model, data, cfg, sink)?;
        let prov = Provenance {
            task: task.to_string(),
            seed: cfg.seed,
            lr: cfg.lr_peak,
            epoch: r.log.len(),
            precision: cfg.precision,
            failed: r.failed,
        };
        Ok(TrainedCheckpoint {
            checkpoint: Checkpoint::from_model(&r.model, prov),
            log: r.log,
        })
    }
    match cfg.precision {
        Precision::F32 => run::<f32>(backbone, data, cfg, task, log_sink),
        Precision::F64 => run::<f64>(backbone, data, cfg, task, log_sink),
    }
}
