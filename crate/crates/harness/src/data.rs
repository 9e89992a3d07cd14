// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset generation and on-disk layout (`data/{train,dev,test}.jsonl`, `data/vocab.json`).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use mechrecall::tasks::atr::atr_split;
use mechrecall::tasks::{
    build_ar_dataset, build_atr_dataset, build_pcfg, read_jsonl, split_query_answer_pairs,
    write_jsonl, Splits, TaskVocabulary,
};
use tensor::Rng;

use crate::config::TaskBlock;

/// Stream label of the pool that a held-out split is carved from.
const SPLIT_POOL: u64 = 3;

pub fn generate(task: &TaskBlock, seed: u64) -> Result<Splits> {
    let rng = Rng::new(seed, 0);
    match task {
        TaskBlock::Ar(p) => Ok(build_ar_dataset(p, &rng)?),
        TaskBlock::Atr {
            params,
            holdout_fraction: None,
        } => Ok(build_atr_dataset(params, &rng)?.1),
        TaskBlock::Atr {
            params,
            holdout_fraction: Some(f),
        } => {
            let g = build_pcfg(&params.pcfg, &mut Rng::new(params.pcfg.grammar_seed, 0x6a))?;
            // Enough documents that train keeps roughly n_train after the held-out share leaves.
            let n_pool = ((params.n_train + params.n_eval) as f64 / (1.0 - f)).ceil() as usize;
            let pool = atr_split(
                &g,
                params.query_mode,
                params.max_symbols,
                n_pool,
                &rng,
                SPLIT_POOL,
            );
            let vocab = TaskVocabulary::atr(g.n_terminals());
            let mut split_rng = Rng::labelled(seed, &[SPLIT_POOL, 1]);
            let (splits, _) =
                split_query_answer_pairs(pool, vocab, *f, params.n_eval, &mut split_rng)?;
            Ok(splits)
        }
    }
}

pub fn save(dir: &Path, splits: &Splits) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(dir.join("train.jsonl"), &splits.train)?;
    write_jsonl(dir.join("dev.jsonl"), &splits.dev)?;
    write_jsonl(dir.join("test.jsonl"), &splits.test)?;
    fs::write(
        dir.join("vocab.json"),
        serde_json::to_string_pretty(&splits.vocab)? + "\n",
    )?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Splits> {
    let ctx = || format!("reading dataset under {}", dir.display());
    let vocab: TaskVocabulary =
        serde_json::from_str(&fs::read_to_string(dir.join("vocab.json")).with_context(ctx)?)
            .with_context(ctx)?;
    Ok(Splits {
        train: read_jsonl(dir.join("train.jsonl")).with_context(ctx)?,
        dev: read_jsonl(dir.join("dev.jsonl")).with_context(ctx)?,
        test: read_jsonl(dir.join("test.jsonl")).with_context(ctx)?,
        vocab,
    })
}

/// Load `dir` if it holds a dataset, otherwise generate and save one.
pub fn ensure(dir: &Path, task: &TaskBlock, seed: u64) -> Result<Splits> {
    if dir.join("vocab.json").exists() {
        return load(dir);
    }
    let splits = generate(task, seed)?;
    save(dir, &splits)?;
    Ok(splits)
}
