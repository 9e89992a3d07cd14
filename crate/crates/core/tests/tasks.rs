// SPDX-License-Identifier: MIT OR Apache-2.0

mod support;

use std::collections::BTreeSet;

use mechrecall::tasks::*;
use proptest::prelude::*;
use support::pcfg::*;
use tensor::Rng;

#[test]
fn ar_query_position_is_uniform_over_keys() {
    let vocab = TaskVocabulary::ar(64).unwrap();
    let mut counts = [0.0; 4];
    for i in 0..10_000 {
        let d = ar_document(&vocab, 4, &mut Rng::labelled(5, &[i])).unwrap();
        counts[d.key_pos / 2] += 1.0;
    }
    let p = chi2_p(&counts, &[2500.0; 4]);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn ar_documents_satisfy_invariants() {
    let params = ArParams {
        vocab_size: 512,
        n_pairs: 8,
        n_train: 200,
        n_eval: 50,
    };
    let s = build_ar_dataset(&params, &Rng::new(1, 0)).unwrap();
    assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (200, 50, 50));
    for d in s.train.iter().chain(&s.dev).chain(&s.test) {
        d.validate(&s.vocab).unwrap();
        let keys: BTreeSet<_> = (0..8).map(|i| d.tokens[2 * i]).collect();
        assert_eq!(keys.len(), 8);
        assert_eq!(d.len(), 18);
        let div = d
            .tokens
            .iter()
            .position(|&t| t == s.vocab.divider_id)
            .unwrap();
        assert!(!s.vocab.key_ids.contains(&s.vocab.divider_id));
        assert!(!s.vocab.value_ids.contains(&s.vocab.divider_id));
        assert_eq!(div, d.query_pos - 1);
    }
    assert!(s.vocab.key_ids.end <= s.vocab.value_ids.start);
}

#[test]
fn datasets_are_deterministic_and_round_trip() {
    let params = ArParams {
        vocab_size: 32,
        n_pairs: 4,
        n_train: 30,
        n_eval: 10,
    };
    let a = build_ar_dataset(&params, &Rng::new(9, 3)).unwrap();
    let b = build_ar_dataset(&params, &Rng::new(9, 3)).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    write_jsonl(&path, &a.train).unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), a.train);

    let atr = AtrParams {
        pcfg: PcfgParams {
            n_nonterminals: 8,
            n_terminals: 6,
            d_max: 4,
            l_max: 3,
            r_max: 3,
            ..PcfgParams::default()
        },
        n_train: 20,
        n_eval: 5,
        ..AtrParams::default()
    };
    let (g, s) = build_atr_dataset(&atr, &Rng::new(2, 0)).unwrap();
    write_jsonl(&path, &s.train).unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), s.train);
    let json = serde_json::to_string(&g).unwrap();
    assert_eq!(serde_json::from_str::<Pcfg>(&json).unwrap(), g);
}

#[test]
fn grammar_defaults_match_the_atr_table() {
    let p = PcfgParams::default();
    assert_eq!(p.head_side, HeadSide::Right);
    assert_eq!((p.d_max, p.l_max, p.r_max), (10, 5, 5));
    assert_eq!((p.n_nonterminals, p.n_terminals), (40, 20));
    assert_eq!(p.terminal_weight, 20.0);
    assert_eq!(AtrParams::default().n_eval, 320);
    assert_eq!(ArParams::default().n_eval, 320);
}

#[test]
fn hundred_random_grammars_are_valid() {
    check_random_grammars(100).unwrap();
}

#[test]
fn toy_grammar_yields_match_enumeration() {
    let tv = toy_yield_tv(50_000, 21).unwrap();
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn sampled_trees_match_enumerated_parents() {
    let g = toy_grammar();
    let exact = exact_yields(&g, 16);
    let mut rng = Rng::new(22, 0);
    for _ in 0..500 {
        let (y, tree) = g.sample_derivation(16, &mut rng);
        let par = tree.parents(y.len());
        assert!(exact.iter().any(|(ey, ep, _, _)| *ey == y && *ep == par));
    }
}

#[test]
fn query_weighting_matches_enumeration_chi_squared() {
    let (p, cells) = query_weighting_chi2(40_000, 31).unwrap();
    assert!(p > 0.001, "chi-squared p = {p} over {cells} cells");
}

#[test]
fn parents_with_more_children_are_queried_less_per_child() {
    // root r has children: a (itself heading 4 leaves) and nothing else
    // yield: b c d e a r  -> a heads b c d e, r heads a
    let tree = ParseTree {
        terminal: 10,
        pos: 5,
        span: (0, 6),
        children: vec![ParseTree {
            terminal: 4,
            pos: 4,
            span: (0, 5),
            children: (0..4).map(|i| ParseTree::leaf(i, i)).collect(),
        }],
    };
    let yld = vec![0, 1, 2, 3, 4, 10];
    let mut counts = [0.0f64; 6];
    let mut rng = Rng::new(4, 4);
    let n = 100_000;
    for _ in 0..n {
        let q = sample_query(&tree, &yld, &mut rng).unwrap();
        counts[q.key_pos] += 1.0;
    }
    // weights: four children at 1/4 each, one child at 1
    for c in 0..4 {
        let ratio = counts[c] / counts[4];
        assert!((ratio - 0.25).abs() / 0.25 < 0.05, "ratio {ratio}");
    }
}

#[test]
fn repeated_terminal_resolves_to_rightmost_instance() {
    // yield: t x t y r ; first t's parent is x, second t's parent is y
    let tree = ParseTree {
        terminal: 9,
        pos: 4,
        span: (0, 5),
        children: vec![
            ParseTree {
                terminal: 1,
                pos: 1,
                span: (0, 2),
                children: vec![ParseTree::leaf(7, 0)],
            },
            ParseTree {
                terminal: 2,
                pos: 3,
                span: (2, 4),
                children: vec![ParseTree::leaf(7, 2)],
            },
        ],
    };
    let yld = vec![7, 1, 7, 2, 9];
    let mut rng = Rng::new(0, 0);
    for _ in 0..2000 {
        let q = sample_query(&tree, &yld, &mut rng).unwrap();
        if q.query == 7 {
            assert_eq!((q.key_pos, q.value_pos, q.answer), (2, 3, 2));
        }
    }
}

#[test]
fn single_rule_grammar_queries_the_non_head() {
    use Symbol::T;
    let g = Pcfg {
        params: PcfgParams {
            n_nonterminals: 1,
            n_terminals: 2,
            d_max: 1,
            l_max: 2,
            r_max: 1,
            ..PcfgParams::default()
        },
        depth: vec![1],
        head_dist: vec![vec![0.5, 0.5]],
        rules: vec![vec![Rule {
            rhs: vec![T(0), T(1)],
            prob: 1.0,
        }]],
    };
    let d = atr_document(&g, QueryMode::Parent, 1024, &mut Rng::new(0, 0));
    assert_eq!(d.tokens, vec![0, 1, 2, 0]);
    assert_eq!(d.answer_id, 1);
    let s = atr_document(&g, QueryMode::RightmostSibling, 1024, &mut Rng::new(0, 0));
    assert_eq!(s.answer_id, 0);
}

#[test]
fn sibling_answers_come_from_the_same_rule() {
    let params = AtrParams {
        pcfg: PcfgParams {
            n_nonterminals: 16,
            n_terminals: 12,
            d_max: 6,
            l_max: 4,
            ..PcfgParams::default()
        },
        n_train: 0,
        n_eval: 200,
        query_mode: QueryMode::RightmostSibling,
        ..AtrParams::default()
    };
    let (_, s) = build_atr_dataset(&params, &Rng::new(8, 0)).unwrap();
    for d in &s.dev {
        let parent = d
            .meta
            .pair_positions
            .iter()
            .find(|(c, _)| *c == d.key_pos)
            .unwrap()
            .1;
        let siblings: Vec<usize> = d
            .meta
            .pair_positions
            .iter()
            .filter(|(_, p)| *p == parent)
            .map(|(c, _)| *c)
            .collect();
        assert_eq!(d.value_pos, *siblings.iter().max().unwrap());
        assert_eq!(d.answer_id, d.tokens[d.value_pos]);
    }
}

#[test]
fn pair_split_holds_out_a_fifth() {
    let vocab = TaskVocabulary::atr(10);
    let pool: Vec<Document> = (0..200)
        .map(|i| {
            let q = i % 10;
            let a = (q + 1) % 10;
            Document {
                task: TaskKind::Atr,
                tokens: vec![q, a, 10, q],
                key_pos: 0,
                value_pos: 1,
                next_key_pos: None,
                query_pos: 3,
                answer_id: a,
                meta: DocMeta::default(),
            }
        })
        .collect();
    let (s, held) =
        split_query_answer_pairs(pool.clone(), vocab.clone(), 0.2, 20, &mut Rng::new(1, 0))
            .unwrap();
    assert_eq!(held.len(), 2);
    let pair = |d: &Document| (d.tokens[d.query_pos], d.answer_id);
    assert!(s.train.iter().all(|d| !held.contains(&pair(d))));
    assert!(s.dev.iter().all(|d| !held.contains(&pair(d))));
    assert!(s.test.iter().all(|d| held.contains(&pair(d))));
    let train_pairs: BTreeSet<_> = s.train.iter().map(pair).collect();
    assert_eq!(train_pairs.len(), 8);
    let (again, _) =
        split_query_answer_pairs(pool, vocab.clone(), 0.2, 20, &mut Rng::new(1, 0)).unwrap();
    assert_eq!(s, again);
    let tiny = vec![s.train[0].clone()];
    assert!(split_query_answer_pairs(tiny, vocab, 0.2, 20, &mut Rng::new(1, 0)).is_err());
}

#[test]
fn corruption_changes_only_the_key() {
    let vocab = TaskVocabulary::ar(64).unwrap();
    for i in 0..200 {
        let mut rng = Rng::labelled(3, &[i]);
        let d = ar_document(&vocab, 8, &mut rng).unwrap();
        let c = corrupt_key(&d, &vocab, &mut rng).unwrap();
        let diff: Vec<usize> = (0..d.len())
            .filter(|&j| d.tokens[j] != c.tokens[j])
            .collect();
        assert_eq!(diff, vec![d.key_pos]);
        assert!(!d.tokens.contains(&c.tokens[d.key_pos]));
        assert!(vocab.key_ids.contains(&c.tokens[d.key_pos]));
    }
    let full = TaskVocabulary::ar(4).unwrap();
    let d = ar_document(&full, 2, &mut Rng::new(0, 0)).unwrap();
    assert!(corrupt_key(&d, &full, &mut Rng::new(0, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn atr_documents_are_well_formed(seed in any::<u64>(), grammar in 0u64..20) {
        let params = PcfgParams {
            n_nonterminals: 16,
            n_terminals: 12,
            d_max: 6,
            l_max: 4,
            grammar_seed: grammar,
            ..PcfgParams::default()
        };
        let g = build_pcfg(&params, &mut Rng::new(grammar, 0)).unwrap();
        let vocab = TaskVocabulary::atr(12);
        let mut rng = Rng::new(seed, 0);
        let (y, tree) = g.sample_derivation(MAX_SYMBOLS, &mut rng);
        prop_assert_eq!(tree.edge_count(), y.len() - 1);
        prop_assert!(y.len() <= MAX_SYMBOLS);
        let d = atr_document(&g, QueryMode::Parent, MAX_SYMBOLS, &mut rng);
        prop_assert!(d.validate(&vocab).is_ok());
        prop_assert_eq!(d.meta.pair_positions.len(), d.len() - 3);
        let c = corrupt_key(&d, &vocab, &mut rng).unwrap();
        prop_assert_ne!(c.tokens[d.key_pos], d.tokens[d.key_pos]);
    }
}
