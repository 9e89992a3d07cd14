// SPDX-License-Identifier: MIT OR Apache-2.0

//! Held-out (query, answer) pairs and single-token key corruption.

use std::collections::BTreeSet;

use tensor::Rng;

use super::document::{Document, TaskKind, TaskVocabulary};
use super::Splits;
use crate::error::{Error, Result};

/// Partition the unique (query, answer) pairs of `pool` so that a
/// `holdout_fraction` of them appear only in test.
///
/// Test takes up to `n_eval` held-out documents, dev the first `n_eval`
/// in-distribution documents, and train every remaining in-distribution one.
pub fn split_query_answer_pairs(
    pool: Vec<Document>,
    vocab: TaskVocabulary,
    holdout_fraction: f64,
    n_eval: usize,
    rng: &mut Rng,
) -> Result<(Splits, BTreeSet<(usize, usize)>)> {
    let pair = |d: &Document| (d.tokens[d.query_pos], d.answer_id);
    let unique: BTreeSet<(usize, usize)> = pool.iter().map(pair).collect();
    let n_hold = (unique.len() as f64 * holdout_fraction).round() as usize;
    if n_hold == 0 || n_hold >= unique.len() {
        return Err(Error::task(format!(
            "{} unique pairs cannot be split with fraction {holdout_fraction}",
            unique.len()
        )));
    }
    let mut pairs: Vec<_> = unique.into_iter().collect();
    rng.shuffle(&mut pairs);
    let held: BTreeSet<_> = pairs[..n_hold].iter().copied().collect();
    let (mut test, mut rest): (Vec<_>, Vec<_>) =
        pool.into_iter().partition(|d| held.contains(&pair(d)));
    test.truncate(n_eval);
    let n_dev = n_eval.min(rest.len());
    let train = rest.split_off(n_dev);
    Ok((
        Splits {
            train,
            dev: rest,
            test,
            vocab,
        },
        held,
    ))
}

/// Replace the token at `key_pos` by another token of the same class.
///
/// AR draws a key absent from the document; ATR draws any other terminal.
pub fn corrupt_key(doc: &Document, vocab: &TaskVocabulary, rng: &mut Rng) -> Result<Document> {
    let original = doc.tokens[doc.key_pos];
    let candidates: Vec<usize> = match doc.task {
        TaskKind::Ar => {
            let present: BTreeSet<usize> = doc.tokens.iter().copied().collect();
            vocab
                .key_ids
                .clone()
                .filter(|k| !present.contains(k))
                .collect()
        }
        TaskKind::Atr => vocab
            .terminal_ids
            .clone()
            .filter(|&t| t != original)
            .collect(),
    };
    if candidates.is_empty() {
        return Err(Error::task("no eligible replacement token for corruption"));
    }
    let mut out = doc.clone();
    out.tokens[doc.key_pos] = candidates[rng.below(candidates.len())];
    Ok(out)
}
