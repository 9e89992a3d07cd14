// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Ar,
    Atr,
}

/// Token-id layout shared by every document of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskVocabulary {
    pub key_ids: Range<usize>,
    pub value_ids: Range<usize>,
    /// Empty for AR.
    pub terminal_ids: Range<usize>,
    pub divider_id: usize,
    pub total_size: usize,
}

impl TaskVocabulary {
    /// AR layout: keys `[0, V/2)`, values `[V/2, V)`, divider `V`.
    pub fn ar(vocab_size: usize) -> Result<Self> {
        if vocab_size < 2 || !vocab_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "AR vocabulary size must be even and >= 2, got {vocab_size}"
            )));
        }
        let half = vocab_size / 2;
        Ok(Self {
            key_ids: 0..half,
            value_ids: half..vocab_size,
            terminal_ids: 0..0,
            divider_id: vocab_size,
            total_size: vocab_size + 1,
        })
    }

    /// ATR layout: terminals `[0, |Σ|)`, divider `|Σ|`.
    pub fn atr(n_terminals: usize) -> Self {
        Self {
            key_ids: 0..n_terminals,
            value_ids: 0..n_terminals,
            terminal_ids: 0..n_terminals,
            divider_id: n_terminals,
            total_size: n_terminals + 1,
        }
    }

    /// Number of tokens an answer can take; chance likelihood is its inverse.
    pub fn answer_space(&self) -> usize {
        self.value_ids.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    /// (key, value) index pairs for AR, (child, parent) for ATR.
    pub pair_positions: Vec<(usize, usize)>,
}

/// A tokenised task instance with role annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub task: TaskKind,
    pub tokens: Vec<usize>,
    pub key_pos: usize,
    pub value_pos: usize,
    pub next_key_pos: Option<usize>,
    pub query_pos: usize,
    pub answer_id: usize,
    pub meta: DocMeta,
}

/// Token positions addressed by an intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionRole {
    Key,
    Value,
    NextKey,
    Query,
}

impl PositionRole {
    pub const ALL: [PositionRole; 4] = [Self::Key, Self::Value, Self::NextKey, Self::Query];

    pub fn name(self) -> &'static str {
        match self {
            Self::Key => "key",
            Self::Value => "value",
            Self::NextKey => "next_key",
            Self::Query => "query",
        }
    }
}

impl std::str::FromStr for PositionRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::config(format!("unknown position role {s:?}")))
    }
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn position(&self, role: PositionRole) -> Option<usize> {
        match role {
            PositionRole::Key => Some(self.key_pos),
            PositionRole::Value => Some(self.value_pos),
            PositionRole::NextKey => self.next_key_pos,
            PositionRole::Query => Some(self.query_pos),
        }
    }

    /// Check the annotation invariants shared by AR and ATR documents.
    pub fn validate(&self, vocab: &TaskVocabulary) -> Result<()> {
        let fail = |msg: &str| Err(Error::invalid_document(msg));
        let n = self.tokens.len();
        if n < 3 || self.query_pos + 1 != n {
            return fail("query must be the last token");
        }
        if self.tokens[n - 2] != vocab.divider_id {
            return fail("divider must immediately precede the query");
        }
        if self
            .tokens
            .iter()
            .filter(|&&t| t == vocab.divider_id)
            .count()
            != 1
        {
            return fail("divider must occur exactly once");
        }
        if self.key_pos >= n - 2 || self.value_pos >= n - 2 {
            return fail("key and value must lie in the context");
        }
        if self.tokens[self.query_pos] != self.tokens[self.key_pos] {
            return fail("query token must equal the key token");
        }
        if self.tokens.iter().any(|&t| t >= vocab.total_size) {
            return fail("token outside vocabulary");
        }
        match self.task {
            TaskKind::Ar => {
                if self.tokens[self.value_pos] != self.answer_id {
                    return fail("AR answer must be the token at value_pos");
                }
                if !vocab.key_ids.contains(&self.tokens[self.key_pos])
                    || !vocab.value_ids.contains(&self.answer_id)
                {
                    return fail("AR key/value outside their ranges");
                }
            }
            TaskKind::Atr => {
                let rightmost = self.tokens[..n - 2]
                    .iter()
                    .rposition(|&t| t == self.tokens[self.query_pos]);
                if rightmost != Some(self.key_pos) {
                    return fail("ATR key must be the rightmost instance of the query");
                }
                if self.tokens[self.value_pos] != self.answer_id {
                    return fail("ATR answer must be the token at value_pos");
                }
            }
        }
        Ok(())
    }
}

/// Write documents as JSON lines.
pub fn write_jsonl<P: AsRef<Path>>(path: P, docs: &[Document]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<P: AsRef<Path>>(path: P) -> Result<Vec<Document>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
