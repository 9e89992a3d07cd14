// SPDX-License-Identifier: MIT OR Apache-2.0

//! Likelihood and accuracy of the answer at the query position.

use serde::{Deserialize, Serialize};
use tensor::Real;

use crate::error::Result;
use crate::model_zoo::{Batch, Hooks, Model};
use crate::tasks::Document;

pub const EVAL_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub p_answer: f64,
    pub predicted: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub likelihood: f64,
    pub accuracy: f64,
    pub records: Vec<EvalRecord>,
}

/// Probability of the answer at each document's query position.
pub fn query_distribution<T: Real>(model: &Model<T>, docs: &[&Document]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(docs.len());
    for chunk in docs.chunks(EVAL_BATCH) {
        let batch = Batch::from_documents(chunk);
        let rows: Vec<usize> = chunk
            .iter()
            .enumerate()
            .map(|(b, d)| batch.row(b, d.query_pos))
            .collect();
        let p = model.probabilities(&batch, &rows, &mut Hooks::none())?;
        out.extend(
            p.data()
                .chunks(p.last_dim())
                .map(|r| r.iter().map(|x| x.f64()).collect::<Vec<_>>()),
        );
    }
    Ok(out)
}

/// Argmax over the full vocabulary; ties go to the lowest id.
pub fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

pub fn evaluate<T: Real>(model: &Model<T>, docs: &[Document]) -> Result<EvalResult> {
    let refs: Vec<&Document> = docs.iter().collect();
    let dists = query_distribution(model, &refs)?;
    let records: Vec<EvalRecord> = dists
        .iter()
        .zip(docs)
        .enumerate()
        .map(|(index, (p, d))| {
            let predicted = argmax(p);
            EvalRecord {
                index,
                p_answer: p[d.answer_id],
                predicted,
                correct: predicted == d.answer_id,
            }
        })
        .collect();
    let n = records.len().max(1) as f64;
    Ok(EvalResult {
        likelihood: records.iter().map(|r| r.p_answer).sum::<f64>() / n,
        accuracy: records.iter().filter(|r| r.correct).count() as f64 / n,
        records,
    })
}
