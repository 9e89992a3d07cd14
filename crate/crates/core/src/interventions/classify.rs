// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attribution scores and mechanism labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{InterventionResult, Triple};
use crate::model_zoo::{CapturePoint, Site};
use crate::tasks::PositionRole;

pub const ATTRIBUTION_FLOOR: f64 = 0.01;
pub const DOMINANCE_MARGIN: f64 = 0.2;

/// `(restored - corrupted) / (original - corrupted)`, or `None` when the
/// corruption moved the likelihood by less than `floor`.
pub fn attribution_score(t: &Triple, floor: f64) -> Option<f64> {
    let denom = t.p_original - t.p_corrupted;
    (denom >= floor).then(|| (t.p_restored - t.p_corrupted) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Induction,
    #[serde(rename = "direct_retrieval_L0")]
    DirectRetrievalL0,
    #[serde(rename = "direct_retrieval_L1")]
    DirectRetrievalL1,
    None,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Self::Induction => "induction",
            Self::DirectRetrievalL0 => "direct_retrieval_L0",
            Self::DirectRetrievalL1 => "direct_retrieval_L1",
            Self::None => "none",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismLabel {
    pub label: Mechanism,
    /// Attribution per role at the block input of the classified layer.
    pub evidence: BTreeMap<PositionRole, Option<f64>>,
}

/// Label from the block-input restorations at `layer` (layer 1 in two-layer models).
///
/// Candidates are value or next key (induction), query (layer-0 direct
/// retrieval) and key (layer-1 direct retrieval); the best must beat the
/// runner-up by [`DOMINANCE_MARGIN`].
pub fn classify_mechanism(grid: &[InterventionResult], layer: usize) -> MechanismLabel {
    let at = CapturePoint::new(layer, Site::BlockIn);
    let evidence: BTreeMap<PositionRole, Option<f64>> = grid
        .iter()
        .filter(|r| r.point == at)
        .map(|r| (r.role, r.attribution))
        .collect();
    let get = |role| evidence.get(&role).copied().flatten();
    let induction = match (get(PositionRole::Value), get(PositionRole::NextKey)) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    let mut cands: Vec<(Mechanism, f64)> = [
        (Mechanism::Induction, induction),
        (Mechanism::DirectRetrievalL0, get(PositionRole::Query)),
        (Mechanism::DirectRetrievalL1, get(PositionRole::Key)),
    ]
    .into_iter()
    .filter_map(|(m, s)| s.map(|s| (m, s)))
    .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1));
    let label = match cands.as_slice() {
        [] => Mechanism::None,
        [(m, _)] => *m,
        [(m, a), (_, b), ..] if a - b >= DOMINANCE_MARGIN => *m,
        _ => Mechanism::None,
    };
    MechanismLabel { label, evidence }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(o: f64, c: f64, r: f64) -> Triple {
        Triple {
            p_original: o,
            p_corrupted: c,
            p_restored: r,
        }
    }

    #[test]
    fn attribution_anchors() {
        assert_eq!(attribution_score(&t(0.9, 0.1, 0.9), 0.01), Some(1.0));
        assert_eq!(attribution_score(&t(0.9, 0.1, 0.1), 0.01), Some(0.0));
        assert!((attribution_score(&t(0.9, 0.1, 0.5), 0.01).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(attribution_score(&t(0.004, 0.0039, 0.004), 0.01), None);
    }

    fn grid(value: f64, key: f64, query: f64) -> Vec<InterventionResult> {
        let p = CapturePoint::new(1, Site::BlockIn);
        [
            (PositionRole::Value, value),
            (PositionRole::Key, key),
            (PositionRole::Query, query),
        ]
        .into_iter()
        .map(|(role, a)| InterventionResult {
            point: p,
            role,
            p_original: 1.0,
            p_corrupted: 0.0,
            p_restored: a,
            attribution: Some(a),
            n_examples: 1,
            examples: vec![],
        })
        .collect()
    }

    #[test]
    fn fixtures_classify() {
        assert_eq!(
            classify_mechanism(&grid(0.95, 0.05, 0.02), 1).label,
            Mechanism::Induction
        );
        assert_eq!(
            classify_mechanism(&grid(0.05, 0.05, 0.9), 1).label,
            Mechanism::DirectRetrievalL0
        );
        assert_eq!(
            classify_mechanism(&grid(0.1, 0.85, 0.0), 1).label,
            Mechanism::DirectRetrievalL1
        );
        assert_eq!(
            classify_mechanism(&grid(0.5, 0.4, 0.0), 1).label,
            Mechanism::None
        );
        assert_eq!(
            classify_mechanism(&grid(0.9, 0.0, 0.0), 0).label,
            Mechanism::None
        );
    }

    #[test]
    fn label_names_round_trip() {
        let s = serde_json::to_string(&Mechanism::DirectRetrievalL0).unwrap();
        assert_eq!(s, "\"direct_retrieval_L0\"");
    }
}
