// SPDX-License-Identifier: MIT OR Apache-2.0

//! Associative treecall: a grammar yield, a divider, then a terminal whose
//! parent (or rightmost sibling) is the answer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tensor::Rng;

use super::ar::{SPLIT_DEV, SPLIT_TEST, SPLIT_TRAIN};
use super::document::{DocMeta, Document, TaskKind, TaskVocabulary};
use super::pcfg::{build_pcfg, ParseTree, Pcfg, PcfgParams, MAX_SYMBOLS};
use super::Splits;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    #[default]
    Parent,
    RightmostSibling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtrParams {
    pub pcfg: PcfgParams,
    pub n_train: usize,
    pub n_eval: usize,
    pub max_symbols: usize,
    pub query_mode: QueryMode,
}

impl Default for AtrParams {
    fn default() -> Self {
        Self {
            pcfg: PcfgParams::default(),
            n_train: 100_032,
            n_eval: 320,
            max_symbols: MAX_SYMBOLS,
            query_mode: QueryMode::Parent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Query {
    pub query: usize,
    pub answer: usize,
    pub key_pos: usize,
    pub value_pos: usize,
}

/// Draw a parent-child edge with weight `1 / (parent's child count)` and
/// resolve it to the rightmost instance of the child terminal.
///
/// Edges whose child terminal's rightmost instance is the root have no
/// parent to ask about; they are excluded, which is the same as redrawing
/// until a usable edge comes up. Returns `None` when no edge is usable.
pub fn sample_query(tree: &ParseTree, yld: &[usize], rng: &mut Rng) -> Option<Query> {
    let parents = tree.parents(yld.len());
    let children = tree.children_positions(yld.len());
    let rightmost = |t: usize| yld.iter().rposition(|&x| x == t).expect("terminal occurs");
    let weights: Vec<f64> = (0..yld.len())
        .map(|c| match parents[c] {
            Some(p) if parents[rightmost(yld[c])].is_some() => 1.0 / children[p].len() as f64,
            _ => 0.0,
        })
        .collect();
    let c = rng.weighted_index(&weights)?;
    let key_pos = rightmost(yld[c]);
    let value_pos = parents[key_pos].expect("filtered above");
    Some(Query {
        query: yld[key_pos],
        answer: yld[value_pos],
        key_pos,
        value_pos,
    })
}

/// The last child of the queried instance's parent; may be the instance itself.
pub fn rightmost_sibling(tree: &ParseTree, yld: &[usize], q: &Query) -> Query {
    let children = tree.children_positions(yld.len());
    let sib = *children[q.value_pos].last().expect("parent has children");
    Query {
        answer: yld[sib],
        value_pos: sib,
        ..*q
    }
}

pub fn atr_document(g: &Pcfg, mode: QueryMode, max_symbols: usize, rng: &mut Rng) -> Document {
    loop {
        let (yld, tree) = g.sample_derivation(max_symbols, rng);
        if yld.len() < 2 {
            continue;
        }
        let Some(mut q) = sample_query(&tree, &yld, rng) else {
            continue;
        };
        if mode == QueryMode::RightmostSibling {
            q = rightmost_sibling(&tree, &yld, &q);
        }
        let parents = tree.parents(yld.len());
        let pairs = parents
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (c, p)))
            .collect();
        let mut tokens = yld;
        tokens.push(g.n_terminals());
        tokens.push(q.query);
        return Document {
            task: TaskKind::Atr,
            query_pos: tokens.len() - 1,
            tokens,
            key_pos: q.key_pos,
            value_pos: q.value_pos,
            next_key_pos: None,
            answer_id: q.answer,
            meta: DocMeta {
                pair_positions: pairs,
            },
        };
    }
}

pub fn atr_split(
    g: &Pcfg,
    mode: QueryMode,
    max_symbols: usize,
    n: usize,
    base: &Rng,
    split: u64,
) -> Vec<Document> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::labelled(base.seed(), &[base.stream_id(), split, i as u64]);
            atr_document(g, mode, max_symbols, &mut rng)
        })
        .collect()
}

/// One grammar (from `params.pcfg.grammar_seed`) shared by all three splits.
pub fn build_atr_dataset(params: &AtrParams, rng: &Rng) -> Result<(Pcfg, Splits)> {
    let g = build_pcfg(&params.pcfg, &mut Rng::new(params.pcfg.grammar_seed, 0x6a))?;
    let split = |n, id| atr_split(&g, params.query_mode, params.max_symbols, n, rng, id);
    let splits = Splits {
        train: split(params.n_train, SPLIT_TRAIN),
        dev: split(params.n_eval, SPLIT_DEV),
        test: split(params.n_eval, SPLIT_TEST),
        vocab: TaskVocabulary::atr(g.n_terminals()),
    };
    Ok((g, splits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_ab() -> (Vec<usize>, ParseTree) {
        // X -> a b with b the head
        let tree = ParseTree {
            terminal: 1,
            pos: 1,
            span: (0, 2),
            children: vec![ParseTree::leaf(0, 0)],
        };
        (vec![0, 1], tree)
    }

    #[test]
    fn two_terminal_yield_has_one_query() {
        let (y, tree) = tree_ab();
        for s in 0..10 {
            let q = sample_query(&tree, &y, &mut Rng::new(s, 0)).unwrap();
            assert_eq!((q.query, q.answer, q.key_pos, q.value_pos), (0, 1, 0, 1));
        }
    }

    #[test]
    fn rightmost_child_is_its_own_sibling() {
        let (y, tree) = tree_ab();
        let q = sample_query(&tree, &y, &mut Rng::new(0, 0)).unwrap();
        let s = rightmost_sibling(&tree, &y, &q);
        assert_eq!(s.answer, 0);
        assert_eq!(s.value_pos, 0);
    }

    #[test]
    fn root_only_repeats_have_no_query() {
        // X -> a a, right head: the child `a` resolves to the root instance
        let tree = ParseTree {
            terminal: 0,
            pos: 1,
            span: (0, 2),
            children: vec![ParseTree::leaf(0, 0)],
        };
        assert!(sample_query(&tree, &[0, 0], &mut Rng::new(0, 0)).is_none());
    }
}
