// SPDX-License-Identifier: MIT OR Apache-2.0

//! Grid expansion and resumable, parallel training of every run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mechrecall::model_zoo::{BackboneConfig, Checkpoint, MixerKind};
use mechrecall::tasks::Splits;
use mechrecall::trainer::sweep::{read_registry, write_registry};
use mechrecall::trainer::{
    select_best, train_checkpoint, EpochRecord, RunRecord, RunStatus, TrainConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};

/// One training run: a grid point plus a learning rate and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run: String,
    pub cell: String,
    pub mixer: MixerKind,
    pub d_model: usize,
    pub n_layers: usize,
    pub variant: String,
    /// Digest of everything the trained weights depend on.
    pub key: String,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
}

pub fn cell_id(mixer: MixerKind, d: usize, layers: usize, variant: &str, seed: u64) -> String {
    format!("{mixer}-d{d}-l{layers}-{variant}-s{seed}")
}

pub fn run_id(
    mixer: MixerKind,
    d: usize,
    layers: usize,
    variant: &str,
    lr: f64,
    seed: u64,
) -> String {
    format!("{mixer}-d{d}-l{layers}-{variant}-lr{lr:e}-s{seed}")
}

/// Every run of the grid in a fixed order: mixer, width, depth, variant, seed, lr.
pub fn plan(cfg: &ExperimentConfig, vocab_total: usize) -> Result<Vec<RunSpec>> {
    let task = serde_json::to_value(&cfg.task)?;
    let mut out = Vec::new();
    for &mixer in &cfg.models.mixers {
        for &d in &cfg.models.d_models {
            for &layers in &cfg.models.n_layers {
                for v in &cfg.models.variants {
                    let backbone = cfg.backbone(mixer, d, layers, v, vocab_total)?;
                    for &seed in &cfg.train.seeds {
                        for &lr in &cfg.train.lrs {
                            let train = cfg.train.train_config(lr, seed);
                            let material = json!({
                                "task": task,
                                "data_seed": cfg.seed,
                                "backbone": backbone,
                                "train": train,
                            });
                            let key = hex(&Sha256::digest(serde_json::to_vec(&material)?));
                            out.push(RunSpec {
                                run: run_id(mixer, d, layers, &v.name, lr, seed),
                                cell: cell_id(mixer, d, layers, &v.name, seed),
                                mixer,
                                d_model: d,
                                n_layers: layers,
                                variant: v.name.clone(),
                                key,
                                backbone: backbone.clone(),
                                train,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn run_dir(out: &Path, run: &str) -> PathBuf {
    out.join("runs").join(run)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub executed: bool,
}

fn completed(dir: &Path, key: &str) -> Option<RunRecord> {
    let spec: RunSpec = serde_json::from_slice(&fs::read(dir.join("spec.json")).ok()?).ok()?;
    if spec.key != key {
        return None;
    }
    serde_json::from_slice(&fs::read(dir.join("record.json")).ok()?).ok()
}

const RUN_FILES: [&str; 2] = ["checkpoint.json", "log.jsonl"];

/// Train one run unless its directory already holds a finished run with the same key.
///
/// With a `cache`, finished runs are also looked up and stored by key, so
/// identical runs in different experiments train once.
pub fn execute(
    spec: &RunSpec,
    data: &Splits,
    task: &str,
    out: &Path,
    cache: Option<&Path>,
) -> Result<RunOutcome> {
    let dir = run_dir(out, &spec.run);
    if let Some(record) = completed(&dir, &spec.key) {
        return Ok(RunOutcome {
            record,
            executed: false,
        });
    }
    fs::create_dir_all(&dir)?;
    let cached = cache.map(|c| c.join(&spec.key));
    let hit = cached
        .as_ref()
        .is_some_and(|c| RUN_FILES.iter().all(|f| c.join(f).exists()));
    let checkpoint_rel = format!("runs/{}/checkpoint.json", spec.run);
    let (record, executed) = if hit {
        let c = cached.as_ref().expect("hit implies cache");
        for f in RUN_FILES {
            fs::copy(c.join(f), dir.join(f))?;
        }
        let ckpt = Checkpoint::load(&dir.join("checkpoint.json"))?;
        let log = read_log(&dir.join("log.jsonl"))?;
        (
            record_from(spec, &checkpoint_rel, ckpt.provenance.failed.clone(), &log),
            false,
        )
    } else {
        let mut log_buf = Vec::new();
        let record =
            match train_checkpoint(&spec.backbone, data, &spec.train, task, Some(&mut log_buf)) {
                Ok(t) => {
                    t.checkpoint.save(&dir.join("checkpoint.json"))?;
                    fs::write(dir.join("log.jsonl"), &log_buf)?;
                    if let Some(c) = &cached {
                        fs::create_dir_all(c)?;
                        for f in RUN_FILES {
                            fs::copy(dir.join(f), c.join(f))?;
                        }
                    }
                    record_from(
                        spec,
                        &checkpoint_rel,
                        t.checkpoint.provenance.failed.clone(),
                        &t.log,
                    )
                }
                Err(e) => {
                    fs::write(dir.join("log.jsonl"), &log_buf)?;
                    let mut r = record_from(spec, "", Some(e.to_string()), &[]);
                    r.status = RunStatus::Failed;
                    r
                }
            };
        (record, true)
    };
    fs::write(
        dir.join("record.json"),
        serde_json::to_string(&record)? + "\n",
    )?;
    fs::write(
        dir.join("spec.json"),
        serde_json::to_string_pretty(spec)? + "\n",
    )?;
    Ok(RunOutcome { record, executed })
}

fn record_from(
    spec: &RunSpec,
    checkpoint: &str,
    failed: Option<String>,
    log: &[EpochRecord],
) -> RunRecord {
    let last = log.last();
    RunRecord {
        cell: spec.cell.clone(),
        run: spec.run.clone(),
        lr: spec.train.lr_peak,
        seed: spec.train.seed,
        checkpoint: checkpoint.to_string(),
        status: if failed.is_some() {
            RunStatus::Failed
        } else {
            RunStatus::Ok
        },
        reason: failed,
        dev_accuracy: last.map_or(0.0, |r| r.dev_accuracy),
        dev_likelihood: last.map_or(0.0, |r| r.dev_likelihood),
        best: false,
    }
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub records: Vec<RunRecord>,
    pub executed: usize,
    pub skipped: usize,
}

/// Run every planned run on a pool of `workers` threads and write `registry.jsonl`.
pub fn sweep(
    specs: &[RunSpec],
    data: &Splits,
    task: &str,
    out: &Path,
    workers: usize,
    cache: Option<&Path>,
) -> Result<SweepSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let outcomes: Vec<RunOutcome> = pool.install(|| {
        specs
            .par_iter()
            .map(|s| execute(s, data, task, out, cache).with_context(|| format!("run {}", s.run)))
            .collect::<Result<_>>()
    })?;
    let executed = outcomes.iter().filter(|o| o.executed).count();
    let mut records: Vec<RunRecord> = outcomes.into_iter().map(|o| o.record).collect();
    select_best(&mut records);
    write_registry(&out.join("registry.jsonl"), &records)?;
    Ok(SweepSummary {
        skipped: records.len() - executed,
        records,
        executed,
    })
}

/// Registry rows joined with their run specs.
pub fn load_runs(out: &Path) -> Result<Vec<(RunRecord, RunSpec)>> {
    let path = out.join("registry.jsonl");
    let records = read_registry(&path)
        .with_context(|| format!("reading {}; run `train` first", path.display()))?;
    records
        .into_iter()
        .map(|r| {
            let p = run_dir(out, &r.run).join("spec.json");
            let spec: RunSpec = serde_json::from_slice(
                &fs::read(&p).with_context(|| format!("reading {}", p.display()))?,
            )?;
            Ok((r, spec))
        })
        .collect()
}
