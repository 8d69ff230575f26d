//! Selfishness scoring from trained pair models.
//!
//! For a pair (x, y), the contended slots are those the model attributes to
//! deferral or simultaneous transmission. The deferral probability d_x is the
//! share of x's side of that contention resolved by deferring; an honest node
//! defers essentially always, a selfish one rarely. The asymmetry
//! eta = d_y - d_x is positive when x defers less than y, so each partner
//! with a clearly positive eta is a witness against x.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmm::TrainResult;
use crate::sim::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Minimum asymmetry for a partner to count as a witness.
    pub tau_witness: f64,
    /// Minimum selfishness score to flag a node.
    pub tau_selfish: f64,
    /// Minimum number of witnesses to flag a node.
    pub k_min: u32,
    /// Minimum expected contended slots on each side of a pair; below this
    /// the pair is reported as insufficient evidence instead of scored.
    pub min_evidence_slots: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            tau_witness: 0.1,
            tau_selfish: 0.3,
            k_min: 2,
            min_evidence_slots: 50.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("trained model has no state labeled {0}")]
    MissingState(&'static str),
    #[error("insufficient evidence: {evidence_slots:.1} contended slots")]
    InsufficientEvidence { evidence_slots: f64 },
    #[error("pair ({x}, {y}) appears more than once")]
    DuplicatePair { x: NodeId, y: NodeId },
    #[error("pair of {0} with itself")]
    SamePair(NodeId),
    #[error("invalid detector config: {0}")]
    InvalidConfig(&'static str),
}

/// Scored inference for one pair. `eta` is always `d_y - d_x`; construct via
/// [`PairInference::new`] so the invariant holds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInference {
    pub x: NodeId,
    pub y: NodeId,
    pub d_x: f64,
    pub d_y: f64,
    pub eta: f64,
    pub log_likelihood: f64,
    pub evidence_slots: f64,
}

impl PairInference {
    pub fn new(
        x: NodeId,
        y: NodeId,
        d_x: f64,
        d_y: f64,
        log_likelihood: f64,
        evidence_slots: f64,
    ) -> Result<Self, DetectorError> {
        if x == y {
            return Err(DetectorError::SamePair(x));
        }
        Ok(PairInference {
            eta: asymmetry(d_x, d_y),
            x,
            y,
            d_x,
            d_y,
            log_likelihood,
            evidence_slots,
        })
    }
}

/// Deferral probabilities (d_x, d_y) from a trained pair model's expected
/// state occupancies.
///
/// d_x = C(s_Xd) / (C(s_Xd) + C(s_XY)), and symmetrically for d_y. Either
/// denominator below `min_evidence_slots` means the pair barely contended
/// and the ratio would be noise, so it is rejected as insufficient evidence.
pub fn deferral_probabilities(
    result: &TrainResult,
    min_evidence_slots: f64,
) -> Result<(f64, f64), DetectorError> {
    let occ = |label: &'static str| -> Result<f64, DetectorError> {
        let idx = result
            .model
            .state_index(label)
            .ok_or(DetectorError::MissingState(label))?;
        Ok(result.occupancy[idx])
    };
    let c_xd = occ("s_Xd")?;
    let c_yd = occ("s_Yd")?;
    let c_xy = occ("s_XY")?;
    let den_x = c_xd + c_xy;
    let den_y = c_yd + c_xy;
    if den_x < min_evidence_slots || den_y < min_evidence_slots {
        return Err(DetectorError::InsufficientEvidence {
            evidence_slots: c_xd + c_yd + c_xy,
        });
    }
    Ok((c_xd / den_x, c_yd / den_y))
}

/// Total contended slots for a pair: deferral mass on both sides plus
/// overlap mass.
pub fn evidence_slots(result: &TrainResult) -> Result<f64, DetectorError> {
    let occ = |label: &'static str| -> Result<f64, DetectorError> {
        let idx = result
            .model
            .state_index(label)
            .ok_or(DetectorError::MissingState(label))?;
        Ok(result.occupancy[idx])
    };
    Ok(occ("s_Xd")? + occ("s_Yd")? + occ("s_XY")?)
}

/// Witnessed asymmetry of a pair: positive when x defers less than y.
pub fn asymmetry(d_x: f64, d_y: f64) -> f64 {
    d_y - d_x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub node_id: String,
    /// Asymmetry oriented against the accused node.
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node_id: String,
    /// Mean of the strictly positive oriented asymmetries against this node;
    /// 0 when every partner saw it defer at least as much as they did.
    pub score: f64,
    pub witnesses: Vec<Witness>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub x: String,
    pub y: String,
    pub d_x: f64,
    pub d_y: f64,
    pub eta: f64,
    pub log_likelihood: f64,
    pub evidence_slots: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfishnessReport {
    pub nodes: Vec<NodeReport>,
    pub pairs: Vec<PairReport>,
}

impl SelfishnessReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Aggregate per-pair inferences into per-node scores, witnesses, and flags.
///
/// A node is flagged only when its score clears `tau_selfish` and at least
/// `k_min` distinct partners witness against it. Nodes and pairs are sorted
/// by id, so the report is deterministic in the set of inputs.
pub fn build_report(
    pairs: &[PairInference],
    cfg: &DetectorConfig,
) -> Result<SelfishnessReport, DetectorError> {
    if cfg.k_min == 0 {
        return Err(DetectorError::InvalidConfig("k_min must be at least 1"));
    }
    let mut seen: Vec<(&NodeId, &NodeId)> = Vec::new();
    for p in pairs {
        if p.x == p.y {
            return Err(DetectorError::SamePair(p.x.clone()));
        }
        let key = if p.x < p.y { (&p.x, &p.y) } else { (&p.y, &p.x) };
        if seen.contains(&key) {
            return Err(DetectorError::DuplicatePair {
                x: key.0.clone(),
                y: key.1.clone(),
            });
        }
        seen.push(key);
    }

    let mut node_ids: Vec<&NodeId> = Vec::new();
    for p in pairs {
        if !node_ids.contains(&&p.x) {
            node_ids.push(&p.x);
        }
        if !node_ids.contains(&&p.y) {
            node_ids.push(&p.y);
        }
    }
    node_ids.sort();

    let mut nodes = Vec::with_capacity(node_ids.len());
    for &id in &node_ids {
        // Asymmetries oriented against this node: flip sign when it sits on
        // the y side of the stored pair.
        let mut oriented: Vec<(&NodeId, f64)> = Vec::new();
        for p in pairs {
            if &p.x == id {
                oriented.push((&p.y, p.eta));
            } else if &p.y == id {
                oriented.push((&p.x, -p.eta));
            }
        }
        oriented.sort_by(|a, b| a.0.cmp(b.0));
        let positives: Vec<f64> = oriented
            .iter()
            .map(|&(_, e)| e)
            .filter(|&e| e > 0.0)
            .collect();
        let score = if positives.is_empty() {
            0.0
        } else {
            positives.iter().sum::<f64>() / positives.len() as f64
        };
        let witnesses: Vec<Witness> = oriented
            .iter()
            .filter(|&&(_, e)| e > cfg.tau_witness)
            .map(|&(other, e)| Witness {
                node_id: other.to_string(),
                eta: e,
            })
            .collect();
        let flagged = score > cfg.tau_selfish && witnesses.len() >= cfg.k_min as usize;
        nodes.push(NodeReport {
            node_id: id.to_string(),
            score,
            witnesses,
            flagged,
        });
    }

    let mut pair_reports: Vec<PairReport> = pairs
        .iter()
        .map(|p| PairReport {
            x: p.x.to_string(),
            y: p.y.to_string(),
            d_x: p.d_x,
            d_y: p.d_y,
            eta: p.eta,
            log_likelihood: p.log_likelihood,
            evidence_slots: p.evidence_slots,
        })
        .collect();
    pair_reports.sort_by(|a, b| (&a.x, &a.y).cmp(&(&b.x, &b.y)));

    Ok(SelfishnessReport {
        nodes,
        pairs: pair_reports,
    })
}
