// SPDX-License-Identifier: MIT OR Apache-2.0

//! PCFG property checks against exhaustive enumeration.

use std::collections::{BTreeMap, BTreeSet};

use mechrecall::tasks::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tensor::Rng;

pub fn chi2_p(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Build `n` grammars with random shapes and check every invariant.
pub fn check_random_grammars(n: u64) -> Result<(), String> {
    for seed in 0..n {
        let mut rng = Rng::new(seed, 11);
        let params = PcfgParams {
            head_side: if seed % 5 == 0 {
                HeadSide::Left
            } else {
                HeadSide::Right
            },
            d_max: 1 + rng.below(10),
            l_max: 1 + rng.below(5),
            r_max: 1 + rng.below(5),
            n_nonterminals: 1 + rng.below(40),
            n_terminals: 1 + rng.below(20),
            terminal_weight: rng.uniform_range(0.5, 30.0),
            grammar_seed: seed,
        };
        let g =
            build_pcfg(&params, &mut Rng::new(seed, 0)).map_err(|e| format!("seed {seed}: {e}"))?;
        g.validate().map_err(|e| format!("seed {seed}: {e}"))?;
        if params.head_side == HeadSide::Right
            && g.rules
                .iter()
                .flatten()
                .any(|r| !matches!(r.rhs.last(), Some(Symbol::T(_))))
        {
            return Err(format!(
                "seed {seed}: right-headed rule without a final terminal"
            ));
        }
    }
    Ok(())
}

/// Derivations enumerated exhaustively: (yield, parent of each yield index, head index, probability).
pub type Derivation = (Vec<usize>, Vec<Option<usize>>, usize, f64);

pub fn enumerate(g: &Pcfg, x: usize) -> Vec<Derivation> {
    let mut out = Vec::new();
    for rule in &g.rules[x] {
        let head_at = g.head_index(rule);
        // partial: yield, parents, child-root indices, head index, prob
        let mut partial: Vec<(Vec<usize>, Vec<Option<usize>>, Vec<usize>, usize, f64)> =
            vec![(vec![], vec![], vec![], usize::MAX, rule.prob)];
        for (i, s) in rule.rhs.iter().enumerate() {
            let mut next = Vec::new();
            for (y, par, roots, head, p) in &partial {
                match *s {
                    Symbol::T(t) => {
                        let (mut y, mut par, mut roots) = (y.clone(), par.clone(), roots.clone());
                        y.push(t);
                        par.push(None);
                        let h = if i == head_at { y.len() - 1 } else { *head };
                        if i != head_at {
                            roots.push(y.len() - 1);
                        }
                        next.push((y, par, roots, h, *p));
                    }
                    Symbol::N(n) => {
                        for (cy, cpar, chead, cp) in enumerate(g, n) {
                            let off = y.len();
                            let (mut y, mut par, mut roots) =
                                (y.clone(), par.clone(), roots.clone());
                            y.extend(&cy);
                            par.extend(cpar.iter().map(|q| q.map(|q| q + off)));
                            roots.push(chead + off);
                            next.push((y, par, roots, *head, p * cp));
                        }
                    }
                }
            }
            partial = next;
        }
        for (y, mut par, roots, head, p) in partial {
            for r in roots {
                par[r] = Some(head);
            }
            out.push((y, par, head, p));
        }
    }
    out
}

pub fn toy_grammar() -> Pcfg {
    use Symbol::{N, T};
    Pcfg {
        params: PcfgParams {
            n_nonterminals: 2,
            n_terminals: 3,
            d_max: 2,
            l_max: 3,
            r_max: 2,
            ..PcfgParams::default()
        },
        depth: vec![1, 2],
        head_dist: vec![vec![1.0 / 3.0; 3]; 2],
        rules: vec![
            vec![Rule {
                rhs: vec![N(1), N(1), T(0)],
                prob: 1.0,
            }],
            vec![
                Rule {
                    rhs: vec![T(1)],
                    prob: 0.3,
                },
                Rule {
                    rhs: vec![T(2), T(1)],
                    prob: 0.7,
                },
            ],
        ],
    }
}

/// Exact yield distribution with a uniform root, renormalised after rejecting long yields.
pub fn exact_yields(g: &Pcfg, max_symbols: usize) -> Vec<Derivation> {
    let n = g.rules.len() as f64;
    let all: Vec<Derivation> = (0..g.rules.len())
        .flat_map(|x| enumerate(g, x))
        .map(|(y, par, h, p)| (y, par, h, p / n))
        .filter(|d| d.0.len() <= max_symbols)
        .collect();
    let z: f64 = all.iter().map(|d| d.3).sum();
    all.into_iter()
        .map(|(y, par, h, p)| (y, par, h, p / z))
        .collect()
}

/// Total variation between sampled and enumerated yields of [`toy_grammar`].
pub fn toy_yield_tv(n: usize, seed: u64) -> Result<f64, String> {
    let g = toy_grammar();
    g.validate().map_err(|e| e.to_string())?;
    let max_symbols = 4;
    let mut exact: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (y, _, _, p) in exact_yields(&g, max_symbols) {
        *exact.entry(y).or_default() += p;
    }
    let mut counts: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut rng = Rng::new(seed, 0);
    for _ in 0..n {
        let (y, tree) = g.sample_derivation(max_symbols, &mut rng);
        if y.len() > max_symbols || tree.edge_count() != y.len() - 1 {
            return Err(format!("malformed derivation of {y:?}"));
        }
        *counts.entry(y).or_default() += 1.0 / n as f64;
    }
    let keys: BTreeSet<_> = exact.keys().chain(counts.keys()).cloned().collect();
    Ok(keys
        .iter()
        .map(|k| (exact.get(k).unwrap_or(&0.0) - counts.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0)
}

/// Exact distribution of (document tokens, key_pos, value_pos) for parent queries.
pub fn exact_queries(g: &Pcfg, max_symbols: usize) -> BTreeMap<(Vec<usize>, usize, usize), f64> {
    let mut out = BTreeMap::new();
    let mut total = 0.0;
    for (y, par, _, p) in exact_yields(g, max_symbols) {
        if y.len() < 2 {
            continue;
        }
        let n_children = |q: usize| par.iter().filter(|&&x| x == Some(q)).count() as f64;
        let rightmost = |t: usize| y.iter().rposition(|&x| x == t).unwrap();
        let mut weights = BTreeMap::new();
        for c in 0..y.len() {
            if let Some(parent) = par[c] {
                let k = rightmost(y[c]);
                if let Some(v) = par[k] {
                    *weights.entry((k, v)).or_insert(0.0) += 1.0 / n_children(parent);
                }
            }
        }
        let z: f64 = weights.values().sum();
        if z == 0.0 {
            continue;
        }
        total += p;
        for ((k, v), w) in weights {
            *out.entry((y.clone(), k, v)).or_insert(0.0) += p * w / z;
        }
    }
    out.values_mut().for_each(|v| *v /= total);
    out
}

/// Three nonterminals with mixed rule lengths and repeated terminals.
pub fn query_grammar() -> Pcfg {
    use Symbol::{N, T};
    Pcfg {
        params: PcfgParams {
            n_nonterminals: 3,
            n_terminals: 5,
            d_max: 3,
            l_max: 4,
            r_max: 2,
            ..PcfgParams::default()
        },
        depth: vec![1, 2, 3],
        head_dist: vec![vec![0.2; 5]; 3],
        rules: vec![
            vec![
                Rule {
                    rhs: vec![N(1), T(3), T(0)],
                    prob: 0.6,
                },
                Rule {
                    rhs: vec![N(2), N(2), T(4), T(1)],
                    prob: 0.4,
                },
            ],
            vec![Rule {
                rhs: vec![T(2), N(2), T(1)],
                prob: 1.0,
            }],
            vec![
                Rule {
                    rhs: vec![T(3)],
                    prob: 0.5,
                },
                Rule {
                    rhs: vec![T(4), T(2), T(0)],
                    prob: 0.5,
                },
            ],
        ],
    }
}

/// Chi-squared p-value of sampled parent queries against exact enumeration,
/// with the cell count; cells expecting fewer than 5 draws are pooled.
pub fn query_weighting_chi2(n: u64, seed: u64) -> Result<(f64, usize), String> {
    let g = query_grammar();
    g.validate().map_err(|e| e.to_string())?;
    let exact = exact_queries(&g, 1024);
    let mut counts: BTreeMap<(Vec<usize>, usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        let d = atr_document(&g, QueryMode::Parent, 1024, &mut Rng::labelled(seed, &[i]));
        let yld = d.tokens[..d.tokens.len() - 2].to_vec();
        *counts.entry((yld, d.key_pos, d.value_pos)).or_default() += 1.0;
    }
    if let Some(k) = counts.keys().find(|k| !exact.contains_key(*k)) {
        return Err(format!(
            "sampled a query with zero exact probability: {k:?}"
        ));
    }
    let (mut obs, mut exp) = (vec![], vec![]);
    let (mut o_rest, mut e_rest) = (0.0, 0.0);
    for (k, p) in &exact {
        let e = p * n as f64;
        let o = *counts.get(k).unwrap_or(&0.0);
        if e >= 5.0 {
            obs.push(o);
            exp.push(e);
        } else {
            o_rest += o;
            e_rest += e;
        }
    }
    if e_rest > 0.0 {
        obs.push(o_rest);
        exp.push(e_rest);
    }
    Ok((chi2_p(&obs, &exp), obs.len()))
}
