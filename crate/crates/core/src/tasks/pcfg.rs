// SPDX-License-Identifier: MIT OR Apache-2.0

//! Headed probabilistic grammars in (right-)Greibach normal form.
//!
//! Each rule carries one head terminal at the edge given by [`HeadSide`]; it
//! is the parent of every other symbol the rule creates (the head terminal of
//! a nonterminal child's own rule stands in for that child). Depth scores make
//! every grammar non-recursive.

use serde::{Deserialize, Serialize};
use tensor::Rng;

use crate::error::{Error, Result};

pub const MAX_SYMBOLS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcfgParams {
    pub head_side: HeadSide,
    pub d_max: usize,
    pub l_max: usize,
    pub r_max: usize,
    pub n_nonterminals: usize,
    pub n_terminals: usize,
    pub terminal_weight: f64,
    pub grammar_seed: u64,
}

impl Default for PcfgParams {
    fn default() -> Self {
        Self {
            head_side: HeadSide::Right,
            d_max: 10,
            l_max: 5,
            r_max: 5,
            n_nonterminals: 40,
            n_terminals: 20,
            terminal_weight: 20.0,
            grammar_seed: 0,
        }
    }
}

impl PcfgParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d_max", self.d_max),
            ("l_max", self.l_max),
            ("r_max", self.r_max),
            ("n_nonterminals", self.n_nonterminals),
            ("n_terminals", self.n_terminals),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("pcfg.{name} must be >= 1")));
            }
        }
        if !(self.terminal_weight > 0.0) {
            return Err(Error::config("pcfg.terminal_weight must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symbol {
    T(usize),
    N(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub rhs: Vec<Symbol>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pcfg {
    pub params: PcfgParams,
    pub depth: Vec<usize>,
    pub head_dist: Vec<Vec<f64>>,
    pub rules: Vec<Vec<Rule>>,
}

/// A head terminal and the nodes its rule created, in right-hand-side order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseTree {
    pub terminal: usize,
    /// Index of this terminal in the yield.
    pub pos: usize,
    /// Yield range covered by this node's subtree.
    pub span: (usize, usize),
    pub children: Vec<ParseTree>,
}

impl ParseTree {
    pub fn leaf(terminal: usize, pos: usize) -> Self {
        Self {
            terminal,
            pos,
            span: (pos, pos + 1),
            children: Vec::new(),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.children.len() + self.children.iter().map(Self::edge_count).sum::<usize>()
    }

    /// Parent yield index of every yield position; `None` for the root.
    pub fn parents(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        self.visit(&mut |node| {
            for c in &node.children {
                out[c.pos] = Some(node.pos);
            }
        });
        out
    }

    /// Child yield indices of every yield position, in rule order.
    pub fn children_positions(&self, n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n];
        self.visit(&mut |node| {
            out[node.pos] = node.children.iter().map(|c| c.pos).collect();
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&ParseTree)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }
}

pub fn build_pcfg(params: &PcfgParams, rng: &mut Rng) -> Result<Pcfg> {
    params.validate()?;
    let n_nt = params.n_nonterminals;
    let n_t = params.n_terminals;
    let depth: Vec<usize> = (0..n_nt).map(|_| 1 + rng.below(params.d_max)).collect();
    let head_dist: Vec<Vec<f64>> = (0..n_nt).map(|_| rng.dirichlet_uniform(n_t)).collect();
    let mut rules = Vec::with_capacity(n_nt);
    for x in 0..n_nt {
        let eligible: Vec<usize> = (0..n_nt).filter(|&y| depth[y] > depth[x]).collect();
        let n_rules = 1 + rng.below(params.r_max);
        let probs = rng.dirichlet_uniform(n_rules);
        let mut xr = Vec::with_capacity(n_rules);
        for prob in probs {
            let len = 1 + rng.below(params.l_max);
            let head = rng
                .weighted_index(&head_dist[x])
                .expect("Dirichlet draws are positive");
            let mut others = Vec::with_capacity(len - 1);
            for _ in 1..len {
                let total = params.terminal_weight + eligible.len() as f64;
                let pick = rng.uniform() * total;
                if pick < params.terminal_weight || eligible.is_empty() {
                    others.push(Symbol::T(rng.below(n_t)));
                } else {
                    others.push(Symbol::N(eligible[rng.below(eligible.len())]));
                }
            }
            let rhs = match params.head_side {
                HeadSide::Right => {
                    others.push(Symbol::T(head));
                    others
                }
                HeadSide::Left => {
                    let mut v = vec![Symbol::T(head)];
                    v.extend(others);
                    v
                }
            };
            xr.push(Rule { rhs, prob });
        }
        rules.push(xr);
    }
    Ok(Pcfg {
        params: params.clone(),
        depth,
        head_dist,
        rules,
    })
}

struct Rejected;

impl Pcfg {
    pub fn n_terminals(&self) -> usize {
        self.params.n_terminals
    }

    pub fn head_index(&self, rule: &Rule) -> usize {
        match self.params.head_side {
            HeadSide::Right => rule.rhs.len() - 1,
            HeadSide::Left => 0,
        }
    }

    /// Check local normalisation, head placement, depth monotonicity and head distributions.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::task(msg));
        let n_nt = self.params.n_nonterminals;
        if self.rules.len() != n_nt || self.depth.len() != n_nt || self.head_dist.len() != n_nt {
            return fail("per-nonterminal tables disagree with n_nonterminals".into());
        }
        for (x, xr) in self.rules.iter().enumerate() {
            if xr.is_empty() {
                return fail(format!("nonterminal {x} has no rules"));
            }
            let total: f64 = xr.iter().map(|r| r.prob).sum();
            if (total - 1.0).abs() > 1e-9 {
                return fail(format!("rules of {x} sum to {total}"));
            }
            for r in xr {
                if r.rhs.is_empty() || r.rhs.len() > self.params.l_max {
                    return fail(format!("rule of {x} has length {}", r.rhs.len()));
                }
                if !matches!(r.rhs[self.head_index(r)], Symbol::T(_)) {
                    return fail(format!("rule of {x} lacks a head terminal"));
                }
                for s in &r.rhs {
                    match *s {
                        Symbol::N(y) if self.depth[y] <= self.depth[x] => {
                            return fail(format!("{x} -> {y} violates depth order"));
                        }
                        Symbol::T(t) if t >= self.n_terminals() => {
                            return fail(format!("terminal {t} out of range"));
                        }
                        _ => {}
                    }
                }
            }
            if xr.len() > self.params.r_max {
                return fail(format!("{x} has {} rules", xr.len()));
            }
        }
        for (x, d) in self.head_dist.iter().enumerate() {
            let total: f64 = d.iter().sum();
            if d.len() != self.n_terminals() || (total - 1.0).abs() > 1e-9 {
                return fail(format!("head distribution of {x} is not normalised"));
            }
        }
        if self.depth.iter().any(|&d| d == 0 || d > self.params.d_max) {
            return fail("depth score out of range".into());
        }
        Ok(())
    }

    /// Sample a yield and its head tree; the root nonterminal is uniform and
    /// yields longer than `max_symbols` are rejected and redrawn.
    pub fn sample_derivation(&self, max_symbols: usize, rng: &mut Rng) -> (Vec<usize>, ParseTree) {
        loop {
            let root = rng.below(self.rules.len());
            let mut out = Vec::new();
            if let Ok(tree) = self.expand(root, max_symbols, &mut out, rng) {
                return (out, tree);
            }
        }
    }

    /// Leftmost-first expansion: symbols are rewritten in yield order.
    fn expand(
        &self,
        x: usize,
        max_symbols: usize,
        out: &mut Vec<usize>,
        rng: &mut Rng,
    ) -> Result<ParseTree, Rejected> {
        let xr = &self.rules[x];
        let weights: Vec<f64> = xr.iter().map(|r| r.prob).collect();
        let rule = &xr[rng.weighted_index(&weights).unwrap_or(0)];
        let head_at = self.head_index(rule);
        let start = out.len();
        let mut children = Vec::with_capacity(rule.rhs.len() - 1);
        let mut head = None;
        for (i, s) in rule.rhs.iter().enumerate() {
            match *s {
                Symbol::T(t) => {
                    if out.len() >= max_symbols {
                        return Err(Rejected);
                    }
                    out.push(t);
                    if i == head_at {
                        head = Some((t, out.len() - 1));
                    } else {
                        children.push(ParseTree::leaf(t, out.len() - 1));
                    }
                }
                Symbol::N(y) => children.push(self.expand(y, max_symbols, out, rng)?),
            }
        }
        let (terminal, pos) = head.expect("every rule has a head terminal");
        Ok(ParseTree {
            terminal,
            pos,
            span: (start, out.len()),
            children,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_one_grammars_are_flat() {
        let params = PcfgParams {
            d_max: 1,
            ..PcfgParams::default()
        };
        let g = build_pcfg(&params, &mut Rng::new(3, 0)).unwrap();
        g.validate().unwrap();
        assert!(g
            .rules
            .iter()
            .flatten()
            .all(|r| r.rhs.iter().all(|s| matches!(s, Symbol::T(_)))));
        let mut rng = Rng::new(4, 0);
        for _ in 0..50 {
            let (y, tree) = g.sample_derivation(MAX_SYMBOLS, &mut rng);
            assert!(tree.children.iter().all(|c| c.children.is_empty()));
            assert_eq!(tree.edge_count(), y.len() - 1);
        }
    }

    #[test]
    fn single_terminal_rule_gives_single_node() {
        let g = Pcfg {
            params: PcfgParams {
                n_nonterminals: 1,
                n_terminals: 1,
                ..PcfgParams::default()
            },
            depth: vec![1],
            head_dist: vec![vec![1.0]],
            rules: vec![vec![Rule {
                rhs: vec![Symbol::T(0)],
                prob: 1.0,
            }]],
        };
        let (y, tree) = g.sample_derivation(MAX_SYMBOLS, &mut Rng::new(0, 0));
        assert_eq!(y, vec![0]);
        assert_eq!(tree, ParseTree::leaf(0, 0));
    }

    #[test]
    fn zero_counts_are_rejected() {
        let params = PcfgParams {
            r_max: 0,
            ..PcfgParams::default()
        };
        assert!(build_pcfg(&params, &mut Rng::new(0, 0)).is_err());
    }
}
