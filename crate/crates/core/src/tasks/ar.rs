// SPDX-License-Identifier: MIT OR Apache-2.0

//! Associative recall: `k1 v1 ... kn vn <div> q`, answer is the value paired with `q`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tensor::Rng;

use super::document::{DocMeta, Document, TaskKind, TaskVocabulary};
use super::Splits;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArParams {
    /// Keys plus values; the divider is extra.
    pub vocab_size: usize,
    pub n_pairs: usize,
    pub n_train: usize,
    pub n_eval: usize,
}

impl Default for ArParams {
    fn default() -> Self {
        Self {
            vocab_size: 8192,
            n_pairs: 32,
            n_train: 100_032,
            n_eval: 320,
        }
    }
}

/// Stream labels for the three splits.
pub(crate) const SPLIT_TRAIN: u64 = 0;
pub(crate) const SPLIT_DEV: u64 = 1;
pub(crate) const SPLIT_TEST: u64 = 2;

pub fn ar_document(vocab: &TaskVocabulary, n_pairs: usize, rng: &mut Rng) -> Result<Document> {
    if n_pairs == 0 || n_pairs > vocab.key_ids.len() {
        return Err(Error::task(format!(
            "{n_pairs} pairs do not fit a key vocabulary of {}",
            vocab.key_ids.len()
        )));
    }
    let keys = rng.sample_distinct(vocab.key_ids.len(), n_pairs);
    let mut tokens = Vec::with_capacity(2 * n_pairs + 2);
    let mut pairs = Vec::with_capacity(n_pairs);
    for (i, &k) in keys.iter().enumerate() {
        let v = vocab.value_ids.start + rng.below(vocab.value_ids.len());
        tokens.push(vocab.key_ids.start + k);
        tokens.push(v);
        pairs.push((2 * i, 2 * i + 1));
    }
    let q = rng.below(n_pairs);
    let (key_pos, value_pos) = pairs[q];
    tokens.push(vocab.divider_id);
    tokens.push(tokens[key_pos]);
    Ok(Document {
        task: TaskKind::Ar,
        answer_id: tokens[value_pos],
        query_pos: tokens.len() - 1,
        next_key_pos: (q + 1 < n_pairs).then_some(2 * q + 2),
        key_pos,
        value_pos,
        tokens,
        meta: DocMeta {
            pair_positions: pairs,
        },
    })
}

pub(crate) fn ar_split(
    vocab: &TaskVocabulary,
    n_pairs: usize,
    n: usize,
    base: &Rng,
    split: u64,
) -> Result<Vec<Document>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::labelled(base.seed(), &[base.stream_id(), split, i as u64]);
            ar_document(vocab, n_pairs, &mut rng)
        })
        .collect()
}

/// Train, dev and test splits; each document draws from its own `(split, index)` stream.
pub fn build_ar_dataset(params: &ArParams, rng: &Rng) -> Result<Splits> {
    let vocab = TaskVocabulary::ar(params.vocab_size)?;
    Ok(Splits {
        train: ar_split(&vocab, params.n_pairs, params.n_train, rng, SPLIT_TRAIN)?,
        dev: ar_split(&vocab, params.n_pairs, params.n_eval, rng, SPLIT_DEV)?,
        test: ar_split(&vocab, params.n_pairs, params.n_eval, rng, SPLIT_TEST)?,
        vocab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_length_is_two_per_pair_plus_two() {
        let vocab = TaskVocabulary::ar(8192).unwrap();
        let d = ar_document(&vocab, 32, &mut Rng::new(0, 0)).unwrap();
        assert_eq!(d.len(), 66);
        d.validate(&vocab).unwrap();
    }

    #[test]
    fn single_pair_queries_its_key() {
        let vocab = TaskVocabulary::ar(16).unwrap();
        for s in 0..20 {
            let d = ar_document(&vocab, 1, &mut Rng::new(s, 0)).unwrap();
            assert_eq!(d.tokens[d.query_pos], d.tokens[0]);
            assert_eq!(d.answer_id, d.tokens[1]);
            assert_eq!(d.next_key_pos, None);
        }
    }

    #[test]
    fn too_many_pairs_is_an_error() {
        let vocab = TaskVocabulary::ar(8).unwrap();
        assert!(ar_document(&vocab, 5, &mut Rng::new(0, 0)).is_err());
    }

    #[test]
    fn odd_vocabulary_is_rejected() {
        assert!(TaskVocabulary::ar(7).is_err());
    }
}
