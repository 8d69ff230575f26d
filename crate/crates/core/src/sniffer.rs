//! Passive monitoring: lossy sniffer captures, trace merging, and reduction
//! of a merged trace to per-pair observation symbols.
//!
//! A sniffer overhears transmissions from the nodes it covers and misses each
//! one independently with its loss probability. Multiple sniffer vantage
//! points are merged by keying records on (node, packet, attempt); the merged
//! trace is the only input the inference side ever sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sim::{NodeId, SimOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct SnifferConfig {
    pub id: String,
    /// Nodes within listening range. Transmissions from anyone else are
    /// invisible to this sniffer, regardless of loss.
    pub coverage: Vec<NodeId>,
    /// Independent probability of missing a covered transmission entirely.
    pub loss: f64,
    pub seed: u64,
}

/// One overheard transmission. Sniffers observe activity, not outcomes, so
/// there is no success field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedRecord {
    pub node_id: NodeId,
    pub packet_id: u64,
    pub attempt: u32,
    pub start_slot: u64,
    pub end_slot: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapturedTrace {
    pub sniffer_id: String,
    pub total_slots: u64,
    pub records: Vec<CapturedRecord>,
}

/// Union of one or more captures over the same slot horizon, sorted by
/// `(start_slot, node_id, attempt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedTrace {
    pub total_slots: u64,
    pub records: Vec<CapturedRecord>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SnifferError {
    #[error("sniffer loss {0} outside [0, 1]")]
    InvalidLoss(f64),
    #[error("cannot merge zero traces")]
    EmptyMerge,
    #[error("traces cover different horizons: {0} vs {1} slots")]
    MixedTotalSlots(u64, u64),
    #[error("conflicting slot spans for {node_id} packet {packet_id} attempt {attempt}")]
    ConflictingSpans {
        node_id: NodeId,
        packet_id: u64,
        attempt: u32,
    },
    #[error("observation pair needs two distinct nodes, got {0} twice")]
    SamePairNode(NodeId),
    #[error("window first_slot {first_slot} exceeds last_slot {last_slot}")]
    InvalidWindow { first_slot: u64, last_slot: u64 },
    #[error("window last_slot {last_slot} outside trace horizon of {total_slots} slots")]
    WindowOutOfRange { last_slot: u64, total_slots: u64 },
}

/// Overhear one simulation run from a single vantage point.
///
/// One Bernoulli draw per covered transmission, in the canonical transmission
/// order of `output`, so a capture is deterministic in (output, config).
pub fn capture(output: &SimOutput, cfg: &SnifferConfig) -> Result<CapturedTrace, SnifferError> {
    if !(0.0..=1.0).contains(&cfg.loss) {
        return Err(SnifferError::InvalidLoss(cfg.loss));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    for rec in &output.transmissions {
        if !cfg.coverage.contains(&rec.node_id) {
            continue;
        }
        if rng.random_bool(1.0 - cfg.loss) {
            records.push(CapturedRecord {
                node_id: rec.node_id.clone(),
                packet_id: rec.packet_id,
                attempt: rec.attempt,
                start_slot: rec.start_slot,
                end_slot: rec.end_slot,
            });
        }
    }
    Ok(CapturedTrace {
        sniffer_id: cfg.id.clone(),
        total_slots: output.total_slots,
        records,
    })
}

/// Union a set of captures. A record missed by one sniffer survives if any
/// other sniffer caught it; the same key reported with different spans means
/// a corrupt trace and fails the merge.
pub fn merge_traces(traces: &[CapturedTrace]) -> Result<MergedTrace, SnifferError> {
    let Some(first) = traces.first() else {
        return Err(SnifferError::EmptyMerge);
    };
    let total_slots = first.total_slots;
    let mut by_key: std::collections::BTreeMap<(NodeId, u64, u32), (u64, u64)> =
        std::collections::BTreeMap::new();
    for trace in traces {
        if trace.total_slots != total_slots {
            return Err(SnifferError::MixedTotalSlots(total_slots, trace.total_slots));
        }
        for rec in &trace.records {
            let key = (rec.node_id.clone(), rec.packet_id, rec.attempt);
            let span = (rec.start_slot, rec.end_slot);
            match by_key.get(&key) {
                None => {
                    by_key.insert(key, span);
                }
                Some(&existing) if existing == span => {}
                Some(_) => {
                    return Err(SnifferError::ConflictingSpans {
                        node_id: rec.node_id.clone(),
                        packet_id: rec.packet_id,
                        attempt: rec.attempt,
                    });
                }
            }
        }
    }
    let mut records: Vec<CapturedRecord> = by_key
        .into_iter()
        .map(|((node_id, packet_id, attempt), (start_slot, end_slot))| CapturedRecord {
            node_id,
            packet_id,
            attempt,
            start_slot,
            end_slot,
        })
        .collect();
    records.sort_by(|a, b| {
        (a.start_slot, &a.node_id, a.attempt).cmp(&(b.start_slot, &b.node_id, b.attempt))
    });
    Ok(MergedTrace {
        total_slots,
        records,
    })
}

/// What a slot looks like from the perspective of one node pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsSymbol {
    /// Neither pair node transmitting.
    Idle,
    /// Only the first pair node transmitting.
    X,
    /// Only the second pair node transmitting.
    Y,
    /// Both transmitting at once.
    Both,
}

impl ObsSymbol {
    /// Emission alphabet index: i=0, x=1, y=2, xy=3.
    pub fn index(self) -> usize {
        match self {
            ObsSymbol::Idle => 0,
            ObsSymbol::X => 1,
            ObsSymbol::Y => 2,
            ObsSymbol::Both => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ObsSymbol::Idle => "i",
            ObsSymbol::X => "x",
            ObsSymbol::Y => "y",
            ObsSymbol::Both => "xy",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "i" => Some(ObsSymbol::Idle),
            "x" => Some(ObsSymbol::X),
            "y" => Some(ObsSymbol::Y),
            "xy" => Some(ObsSymbol::Both),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ObsSymbol::Idle),
            1 => Some(ObsSymbol::X),
            2 => Some(ObsSymbol::Y),
            3 => Some(ObsSymbol::Both),
            _ => None,
        }
    }
}

/// Per-slot activity symbols for one node pair over an inclusive window.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub x: NodeId,
    pub y: NodeId,
    pub first_slot: u64,
    pub last_slot: u64,
    pub symbols: Vec<ObsSymbol>,
}

impl ObservationSequence {
    /// Symbols as emission alphabet indices.
    pub fn indices(&self) -> Vec<usize> {
        self.symbols.iter().map(|s| s.index()).collect()
    }
}

/// Reduce a merged trace to the {i, x, y, xy} symbol stream of one pair.
///
/// A slot shows a node as transmitting when any merged record of that node
/// covers it; third-party traffic never changes a pair's symbols.
pub fn extract_observations(
    merged: &MergedTrace,
    x: &NodeId,
    y: &NodeId,
    first_slot: u64,
    last_slot: u64,
) -> Result<ObservationSequence, SnifferError> {
    if x == y {
        return Err(SnifferError::SamePairNode(x.clone()));
    }
    if first_slot > last_slot {
        return Err(SnifferError::InvalidWindow {
            first_slot,
            last_slot,
        });
    }
    if last_slot >= merged.total_slots {
        return Err(SnifferError::WindowOutOfRange {
            last_slot,
            total_slots: merged.total_slots,
        });
    }
    let len = (last_slot - first_slot + 1) as usize;
    let mut x_on = vec![false; len];
    let mut y_on = vec![false; len];
    for rec in &merged.records {
        let on = if &rec.node_id == x {
            &mut x_on
        } else if &rec.node_id == y {
            &mut y_on
        } else {
            continue;
        };
        let lo = rec.start_slot.max(first_slot);
        let hi = rec.end_slot.min(last_slot);
        if lo > hi {
            continue;
        }
        for slot in lo..=hi {
            on[(slot - first_slot) as usize] = true;
        }
    }
    let symbols = x_on
        .iter()
        .zip(&y_on)
        .map(|(&xs, &ys)| match (xs, ys) {
            (false, false) => ObsSymbol::Idle,
            (true, false) => ObsSymbol::X,
            (false, true) => ObsSymbol::Y,
            (true, true) => ObsSymbol::Both,
        })
        .collect();
    Ok(ObservationSequence {
        x: x.clone(),
        y: y.clone(),
        first_slot,
        last_slot,
        symbols,
    })
}
