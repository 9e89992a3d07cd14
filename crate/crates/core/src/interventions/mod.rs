// SPDX-License-Identifier: MIT OR Apache-2.0

//! Interchange interventions: run a corrupted input with one activation row
//! restored from the original run and measure how much of the answer's
//! likelihood comes back.

pub mod classify;

use std::io::Write;

use serde::{Deserialize, Serialize};
use tensor::{Real, Rng, Tensor};

pub use classify::{
    attribution_score, classify_mechanism, Mechanism, MechanismLabel, ATTRIBUTION_FLOOR,
    DOMINANCE_MARGIN,
};

use crate::error::{Error, Result};
use crate::model_zoo::{Batch, CapturePoint, Hooks, Model, Patch, Site};
use crate::tasks::{corrupt_key, Document, PositionRole, TaskVocabulary};

pub const DEFAULT_N_EXAMPLES: usize = 64;

/// Where to patch: a capture point and the token role whose row is restored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub point: CapturePoint,
    pub role: PositionRole,
    pub n_examples: usize,
}

/// Answer likelihood on the original, corrupted and patched runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub p_original: f64,
    pub p_corrupted: f64,
    pub p_restored: f64,
}

impl Triple {
    pub fn mean(triples: &[Triple]) -> Triple {
        let n = triples.len().max(1) as f64;
        let sum = |f: fn(&Triple) -> f64| triples.iter().map(f).sum::<f64>() / n;
        Triple {
            p_original: sum(|t| t.p_original),
            p_corrupted: sum(|t| t.p_corrupted),
            p_restored: sum(|t| t.p_restored),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionResult {
    pub point: CapturePoint,
    pub role: PositionRole,
    pub p_original: f64,
    pub p_corrupted: f64,
    pub p_restored: f64,
    pub attribution: Option<f64>,
    pub n_examples: usize,
    pub examples: Vec<Triple>,
}

impl InterventionResult {
    fn from_examples(point: CapturePoint, role: PositionRole, examples: Vec<Triple>) -> Self {
        let m = Triple::mean(&examples);
        Self {
            point,
            role,
            p_original: m.p_original,
            p_corrupted: m.p_corrupted,
            p_restored: m.p_restored,
            attribution: attribution_score(&m, ATTRIBUTION_FLOOR),
            n_examples: examples.len(),
            examples,
        }
    }

    pub fn record(&self, checkpoint: &str) -> GridRecord {
        GridRecord {
            checkpoint: checkpoint.to_string(),
            layer: self.point.layer,
            site: self.point.site,
            role: self.role,
            p_original: self.p_original,
            p_corrupted: self.p_corrupted,
            p_restored: self.p_restored,
            attribution: self.attribution,
            n_examples: self.n_examples,
        }
    }
}

/// One line of the intervention grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub checkpoint: String,
    pub layer: usize,
    pub site: Site,
    pub role: PositionRole,
    pub p_original: f64,
    pub p_corrupted: f64,
    pub p_restored: f64,
    pub attribution: Option<f64>,
    pub n_examples: usize,
}

pub fn write_grid(w: &mut dyn Write, checkpoint: &str, grid: &[InterventionResult]) -> Result<()> {
    for r in grid {
        writeln!(w, "{}", serde_json::to_string(&r.record(checkpoint))?)?;
    }
    Ok(())
}

/// Original documents with their key-corrupted counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub original: Vec<Document>,
    pub corrupted: Vec<Document>,
}

/// Corrupt the key of the first `n` documents that admit a corruption;
/// document `i` uses its own stream so the pairing is stable under truncation.
pub fn make_pairs(
    docs: &[Document],
    vocab: &TaskVocabulary,
    n: usize,
    seed: u64,
) -> Result<PairSet> {
    let mut set = PairSet {
        original: Vec::with_capacity(n),
        corrupted: Vec::with_capacity(n),
    };
    for (i, d) in docs.iter().enumerate() {
        if set.original.len() == n {
            break;
        }
        let mut rng = Rng::labelled(seed, &[0xC0, i as u64]);
        if let Ok(c) = corrupt_key(d, vocab, &mut rng) {
            set.original.push(d.clone());
            set.corrupted.push(c);
        }
    }
    if set.original.len() < n {
        return Err(Error::task(format!(
            "only {} of {n} requested intervention pairs are available",
            set.original.len()
        )));
    }
    Ok(set)
}

/// Clean and corrupted forwards of a pair set, captured once and reused for every patch.
pub struct Baseline<'m, T: Real> {
    model: &'m Model<T>,
    original: Vec<Document>,
    corrupted: Batch,
    query_rows: Vec<usize>,
    answers: Vec<usize>,
    cache: std::collections::BTreeMap<CapturePoint, Tensor<T>>,
    p_original: Vec<f64>,
    p_corrupted: Vec<f64>,
}

impl<'m, T: Real> Baseline<'m, T> {
    pub fn new(model: &'m Model<T>, pairs: &PairSet) -> Result<Self> {
        if pairs.original.is_empty() || pairs.original.len() != pairs.corrupted.len() {
            return Err(Error::task("intervention needs matched, non-empty pairs"));
        }
        for (o, c) in pairs.original.iter().zip(&pairs.corrupted) {
            let differ: Vec<usize> = (0..o.len())
                .filter(|&i| o.tokens.get(i) != c.tokens.get(i))
                .collect();
            if o.len() != c.len()
                || differ.iter().any(|&i| i != o.key_pos)
                || o.query_pos != c.query_pos
            {
                return Err(Error::task(
                    "original and corrupted documents must differ only at the key",
                ));
            }
        }
        let orig_refs: Vec<&Document> = pairs.original.iter().collect();
        let corr_refs: Vec<&Document> = pairs.corrupted.iter().collect();
        let clean = Batch::from_documents(&orig_refs);
        let corrupted = Batch::from_documents(&corr_refs);
        let query_rows: Vec<usize> = orig_refs
            .iter()
            .enumerate()
            .map(|(b, d)| clean.row(b, d.query_pos))
            .collect();
        let answers: Vec<usize> = orig_refs.iter().map(|d| d.answer_id).collect();
        let mut hooks = Hooks::capturing();
        let p_o = model.probabilities(&clean, &query_rows, &mut hooks)?;
        let p_c = model.probabilities(&corrupted, &query_rows, &mut Hooks::none())?;
        Ok(Self {
            model,
            original: pairs.original.clone(),
            p_original: pick(&p_o, &answers),
            p_corrupted: pick(&p_c, &answers),
            corrupted,
            query_rows,
            answers,
            cache: hooks.into_cache(),
        })
    }

    /// Patch the original activation at `point` and `role` into every corrupted
    /// run that has that role; documents without it are skipped.
    pub fn patch(&self, point: CapturePoint, role: PositionRole) -> Result<InterventionResult> {
        self.model.check_address(point)?;
        let act = &self.cache[&point];
        let width = act.last_dim();
        let mut rows = Vec::new();
        let mut keep = Vec::new();
        for (b, d) in self.original.iter().enumerate() {
            if let Some(pos) = d.position(role) {
                rows.push(self.corrupted.row(b, pos));
                keep.push(b);
            }
        }
        if keep.is_empty() {
            return Ok(InterventionResult::from_examples(point, role, Vec::new()));
        }
        let mut values = Vec::with_capacity(rows.len() * width);
        for &r in &rows {
            values.extend_from_slice(act.row(r));
        }
        let patch = Patch {
            point,
            rows,
            values: Tensor::new(&[keep.len(), width], values)?,
        };
        let mut hooks = Hooks::none().with_patches(vec![patch]);
        let p = self
            .model
            .probabilities(&self.corrupted, &self.query_rows, &mut hooks)?;
        let restored = pick(&p, &self.answers);
        let examples = keep
            .iter()
            .map(|&b| Triple {
                p_original: self.p_original[b],
                p_corrupted: self.p_corrupted[b],
                p_restored: restored[b],
            })
            .collect();
        Ok(InterventionResult::from_examples(point, role, examples))
    }
}

fn pick<T: Real>(p: &Tensor<T>, answers: &[usize]) -> Vec<f64> {
    answers
        .iter()
        .enumerate()
        .map(|(i, &a)| p.row(i)[a].f64())
        .collect()
}

/// Likelihood triple for a single pair.
pub fn run_pair_with_patch<T: Real>(
    model: &Model<T>,
    original: &Document,
    corrupted: &Document,
    point: CapturePoint,
    role: PositionRole,
) -> Result<Option<Triple>> {
    let pairs = PairSet {
        original: vec![original.clone()],
        corrupted: vec![corrupted.clone()],
    };
    let r = Baseline::new(model, &pairs)?.patch(point, role)?;
    Ok(r.examples.first().copied())
}

/// Mean triples for every `(point, role)` combination, points outermost.
pub fn restored_likelihood_sweep<T: Real>(
    model: &Model<T>,
    pairs: &PairSet,
    points: &[CapturePoint],
    roles: &[PositionRole],
) -> Result<Vec<InterventionResult>> {
    let base = Baseline::new(model, pairs)?;
    let mut out = Vec::with_capacity(points.len() * roles.len());
    for &p in points {
        for &r in roles {
            out.push(base.patch(p, r)?);
        }
    }
    Ok(out)
}

/// Restore the sequence-mixer output at the query token of `layer`.
pub fn mixer_output_query_intervention<T: Real>(
    model: &Model<T>,
    pairs: &PairSet,
    layer: usize,
) -> Result<InterventionResult> {
    if layer >= model.config.n_layers {
        return Err(Error::config(format!("layer {layer} out of range")));
    }
    Baseline::new(model, pairs)?.patch(
        CapturePoint::new(layer, Site::MixerOut),
        PositionRole::Query,
    )
}
