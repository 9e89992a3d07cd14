// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation and intervention grids for the best checkpoint of each cell.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use mechrecall::interventions::{
    classify_mechanism, make_pairs, mixer_output_query_intervention, restored_likelihood_sweep,
    write_grid, Mechanism, MechanismLabel,
};
use mechrecall::model_zoo::{Checkpoint, MixerKind, Model};
use mechrecall::tasks::{PositionRole, Splits};
use mechrecall::trainer::{evaluate, RunRecord, RunStatus};
use serde::{Deserialize, Serialize};
use tensor::Precision;

use crate::recipes::Expectation;
use crate::sweep::RunSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLine {
    pub run: String,
    pub cell: String,
    pub split: String,
    pub likelihood: f64,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLine {
    pub run: String,
    pub cell: String,
    pub mixer: MixerKind,
    pub variant: String,
    pub d_model: usize,
    pub n_layers: usize,
    pub seed: u64,
    pub layer: usize,
    pub label: Mechanism,
    pub evidence: BTreeMap<PositionRole, Option<f64>>,
    pub p_original: f64,
    pub p_corrupted: f64,
    pub expected: Option<Mechanism>,
}

pub fn best_runs(runs: &[(RunRecord, RunSpec)]) -> Vec<&(RunRecord, RunSpec)> {
    runs.iter()
        .filter(|(r, _)| r.best && r.status == RunStatus::Ok)
        .collect()
}

pub fn load_checkpoint(out: &Path, record: &RunRecord) -> Result<Checkpoint> {
    let p = out.join(&record.checkpoint);
    Checkpoint::load(&p).with_context(|| format!("loading {}", p.display()))
}

/// Dev and test metrics at the precision the checkpoint was trained in.
pub fn eval_run(out: &Path, record: &RunRecord, data: &Splits) -> Result<Vec<EvalLine>> {
    let ckpt = load_checkpoint(out, record)?;
    let mut lines = Vec::new();
    for (split, docs) in [("dev", &data.dev), ("test", &data.test)] {
        let r = match ckpt.provenance.precision {
            Precision::F32 => evaluate(&ckpt.to_model::<f32>()?, docs)?,
            Precision::F64 => evaluate(&ckpt.to_model::<f64>()?, docs)?,
        };
        lines.push(EvalLine {
            run: record.run.clone(),
            cell: record.cell.clone(),
            split: split.into(),
            likelihood: r.likelihood,
            accuracy: r.accuracy,
            n: docs.len(),
        });
    }
    Ok(lines)
}

/// Layer whose block input decides the label: layer 1 when it exists.
pub fn default_classify_layer(n_layers: usize) -> usize {
    n_layers.min(2) - 1
}

pub struct RunAnalysis {
    pub label: LabelLine,
    pub grid_jsonl: Vec<u8>,
    pub mixer_output_jsonl: Vec<u8>,
}

/// Full restoration grid over every capture point and role, at 64-bit, on
/// `n_examples` corrupted test documents.
#[allow(clippy::too_many_arguments)]
pub fn intervene_run(
    out: &Path,
    record: &RunRecord,
    spec: &RunSpec,
    data: &Splits,
    n_examples: usize,
    pair_seed: u64,
    classify_layer: Option<usize>,
    mixer_output_query: bool,
    expected: &[Expectation],
) -> Result<RunAnalysis> {
    let ckpt = load_checkpoint(out, record)?;
    let model: Model<f64> = ckpt.to_model()?;
    let pairs = make_pairs(&data.test, &data.vocab, n_examples, pair_seed)?;
    let grid =
        restored_likelihood_sweep(&model, &pairs, &model.capture_points(), &PositionRole::ALL)?;
    let layer = classify_layer
        .unwrap_or_else(|| default_classify_layer(spec.n_layers))
        .min(spec.n_layers - 1);
    let MechanismLabel { label, evidence } = classify_mechanism(&grid, layer);
    let mut grid_jsonl = Vec::new();
    write_grid(&mut grid_jsonl, &record.checkpoint, &grid)?;
    let mut mixer_output_jsonl = Vec::new();
    if mixer_output_query {
        for l in 0..spec.n_layers {
            let r = mixer_output_query_intervention(&model, &pairs, l)?;
            writeln!(
                mixer_output_jsonl,
                "{}",
                serde_json::to_string(&r.record(&record.checkpoint))?
            )?;
        }
    }
    let first = grid.first();
    let label = LabelLine {
        run: record.run.clone(),
        cell: record.cell.clone(),
        mixer: spec.mixer,
        variant: spec.variant.clone(),
        d_model: spec.d_model,
        n_layers: spec.n_layers,
        seed: spec.train.seed,
        layer,
        label,
        evidence,
        p_original: first.map_or(0.0, |g| g.p_original),
        p_corrupted: first.map_or(0.0, |g| g.p_corrupted),
        expected: expected
            .iter()
            .find(|e| e.mixer == spec.mixer && e.variant == spec.variant)
            .map(|e| e.label),
    };
    Ok(RunAnalysis {
        label,
        grid_jsonl,
        mixer_output_jsonl,
    })
}

pub fn write_jsonl<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        writeln!(buf, "{}", serde_json::to_string(r)?)?;
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_jsonl<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<S>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
