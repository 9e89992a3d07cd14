// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sweep registry: one record per run, best run per cell by dev accuracy.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Grid cell: everything that identifies a run except the learning rate.
    pub cell: String,
    /// Unique run id within the sweep.
    pub run: String,
    pub lr: f64,
    pub seed: u64,
    pub checkpoint: String,
    pub status: RunStatus,
    #[serde(default)]
    pub reason: Option<String>,
    pub dev_accuracy: f64,
    pub dev_likelihood: f64,
    #[serde(default)]
    pub best: bool,
}

/// Mark the best successful run of each cell: highest dev accuracy, then
/// dev likelihood, then the lexicographically smallest run id.
pub fn select_best(records: &mut [RunRecord]) {
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.status != RunStatus::Ok {
            continue;
        }
        let better = match best.get(&r.cell) {
            None => true,
            Some(&j) => {
                let b = &records[j];
                (r.dev_accuracy, r.dev_likelihood) > (b.dev_accuracy, b.dev_likelihood)
                    || ((r.dev_accuracy, r.dev_likelihood) == (b.dev_accuracy, b.dev_likelihood)
                        && r.run < b.run)
            }
        };
        if better {
            best.insert(r.cell.clone(), i);
        }
    }
    for (i, r) in records.iter_mut().enumerate() {
        r.best = best.get(&r.cell) == Some(&i);
    }
}

pub fn write_registry(path: &Path, records: &[RunRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_registry(path: &Path) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
