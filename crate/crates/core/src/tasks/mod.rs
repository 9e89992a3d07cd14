// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic retrieval corpora with positional annotations.

pub mod ar;
pub mod atr;
pub mod document;
pub mod pcfg;
pub mod split;

use serde::{Deserialize, Serialize};

pub use ar::{ar_document, build_ar_dataset, ArParams};
pub use atr::{
    atr_document, build_atr_dataset, rightmost_sibling, sample_query, AtrParams, Query, QueryMode,
};
pub use document::{
    read_jsonl, write_jsonl, DocMeta, Document, PositionRole, TaskKind, TaskVocabulary,
};
pub use pcfg::{build_pcfg, HeadSide, ParseTree, Pcfg, PcfgParams, Rule, Symbol, MAX_SYMBOLS};
pub use split::{corrupt_key, split_query_answer_pairs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub test: Vec<Document>,
    pub vocab: TaskVocabulary,
}
