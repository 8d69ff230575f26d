//! Slotted CSMA/CA simulator with per-node probabilistic carrier-sense defeat.
//!
//! Time advances in fixed slots. A node with a head-of-line packet draws a
//! backoff counter, decrements it on slots it perceives idle, and transmits
//! for `packet_len` slots once the counter reaches zero. Whether a node
//! perceives a neighbor's busy period at all is decided once per encounter by
//! a Bernoulli roll parameterized by its degree of selfishness `p_s`: an
//! honest node (`p_s = 0`) always senses the carrier, a fully selfish node
//! (`p_s = 1`) never does.

mod engine;

pub use engine::run_simulation;

use std::fmt;

use thiserror::Error;

/// Identifier for a network node. Restricted to `[A-Za-z0-9_-]` so ids can be
/// embedded in CSV cells and file names without quoting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, SimError> {
        let id = id.into();
        let ok = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if ok {
            Ok(NodeId(id))
        } else {
            Err(SimError::InvalidNodeId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Directed traffic link: `sender` addresses every packet to `receiver`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub sender: NodeId,
    pub receiver: NodeId,
}

/// Nodes whose overlapping transmissions corrupt packets on one link.
///
/// The rule is explicit rather than derived from geometry: a transmission on
/// the `(sender, receiver)` link fails if any node listed in `nodes` (the
/// sender itself excepted) transmits during an overlapping slot range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfererSet {
    pub receiver: NodeId,
    pub sender: NodeId,
    pub nodes: Vec<NodeId>,
}

/// Static network structure: who exists, who senses whom, who talks to whom,
/// and whose transmissions collide on which link.
///
/// `defer_pairs` are mutual-sensing pairs: each side treats the other's
/// transmissions as carrier (subject to its own perception roll). Nodes not
/// paired here are hidden from each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<NodeId>,
    pub defer_pairs: Vec<(NodeId, NodeId)>,
    pub links: Vec<Link>,
    pub interferers: Vec<InterfererSet>,
}

/// Packet arrival process at a sender.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrival {
    /// A fresh packet is available the moment the previous one leaves.
    Saturated,
    /// One packet arrives per slot with the given probability.
    Bernoulli(f64),
}

/// Per-node behavior parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub id: NodeId,
    /// Degree of selfishness: probability of ignoring a neighbor's busy
    /// period. Each busy-period encounter is perceived with probability
    /// `1 - p_s`.
    pub p_s: f64,
    pub arrival: Arrival,
    /// Backoff counters are drawn uniformly from `[0, cw)`.
    pub cw: u64,
    /// Failed packets are retried at most this many times before being
    /// dropped; total attempts are `retry_limit + 1`.
    pub retry_limit: u32,
}

impl NodeConfig {
    /// Honest saturated sender with the stock contention parameters.
    pub fn honest(id: NodeId) -> Self {
        NodeConfig {
            id,
            p_s: 0.0,
            arrival: Arrival::Saturated,
            cw: 16,
            retry_limit: 4,
        }
    }
}

/// Global run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub total_slots: u64,
    /// Every transmission occupies exactly this many consecutive slots.
    pub packet_len: u64,
    /// Payload size used by the metrics stage, bytes per delivered packet.
    pub packet_bytes: u64,
    pub seed: u64,
}

/// One transmission attempt as it would appear on the air.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmissionRecord {
    pub node_id: NodeId,
    /// Per-sender packet counter, starting at 0.
    pub packet_id: u64,
    /// 1-based attempt number for this packet.
    pub attempt: u32,
    pub start_slot: u64,
    /// Inclusive: the transmission occupies `start_slot..=end_slot`.
    pub end_slot: u64,
    pub success: bool,
}

/// Outcome of one carrier-sense decision. Logged once per (deferrer, busy
/// period) encounter; `deferred` records whether the period was perceived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeferralEvent {
    pub deferrer: NodeId,
    pub transmitter: NodeId,
    /// Slot of the first carrier-sense decision against this busy period.
    pub slot: u64,
    pub deferred: bool,
}

/// Fate of one packet on a link, recorded when its final attempt completes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub packet_id: u64,
    /// Slot the packet entered the system: the Bernoulli arrival slot, or for
    /// saturated senders the slot it reached head of line.
    pub arrival_slot: u64,
    /// End slot of the last attempt.
    pub completion_slot: u64,
    pub delivered: bool,
}

/// Deliveries grouped per link, in topology link order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkDeliveries {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub deliveries: Vec<Delivery>,
}

/// Everything a simulation run produces.
///
/// `transmissions` is sorted by `(start_slot, node_id, attempt)` and
/// `deferral_events` by decision slot, so output is a pure function of the
/// inputs: same topology, node configs, and seed give identical structures.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub total_slots: u64,
    pub packet_bytes: u64,
    pub transmissions: Vec<TransmissionRecord>,
    pub deferral_events: Vec<DeferralEvent>,
    pub deliveries: Vec<LinkDeliveries>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("node id {0:?} is empty or contains characters outside [A-Za-z0-9_-]")]
    InvalidNodeId(String),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("{context} references unknown node {id}")]
    UnknownNode { context: &'static str, id: NodeId },
    #[error("defer pair ({0}, {0}) pairs a node with itself")]
    SelfDeferPair(NodeId),
    #[error("link from {0} to itself")]
    SelfLink(NodeId),
    #[error("node {0} has more than one outgoing link")]
    DuplicateLinkSender(NodeId),
    #[error("interferer set for ({receiver}, {sender}) does not match any link")]
    InterferersWithoutLink { receiver: NodeId, sender: NodeId },
    #[error("duplicate interferer set for link ({receiver}, {sender})")]
    DuplicateInterfererSet { receiver: NodeId, sender: NodeId },
    #[error("topology has no nodes")]
    EmptyTopology,
    #[error("node {id} has invalid {what} {value} (must be within [0, 1])")]
    InvalidProbability {
        id: NodeId,
        what: &'static str,
        value: f64,
    },
    #[error("node {0} has contention window 0 (backoff needs cw >= 1)")]
    ZeroContentionWindow(NodeId),
    #[error("node {0} appears in the simulation but has no NodeConfig")]
    MissingNodeConfig(NodeId),
    #[error("NodeConfig for {0} does not match any topology node")]
    ConfigWithoutNode(NodeId),
    #[error("packet_len {packet_len} exceeds total_slots {total_slots}")]
    PacketTooLong { packet_len: u64, total_slots: u64 },
    #[error("packet_len must be at least 1")]
    ZeroPacketLen,
}

/// Fraction of `x`'s carrier-sense decisions against `y`'s busy periods that
/// resulted in deferral. `None` when `x` never encountered `y` transmitting.
///
/// This is the simulator-side ground truth that the HMM pipeline estimates
/// from sniffed traffic alone; its expectation is `1 - p_s(x)`.
pub fn ground_truth_deferral(output: &SimOutput, x: &NodeId, y: &NodeId) -> Option<f64> {
    let mut total = 0u64;
    let mut deferred = 0u64;
    for ev in &output.deferral_events {
        if &ev.deferrer == x && &ev.transmitter == y {
            total += 1;
            if ev.deferred {
                deferred += 1;
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(deferred as f64 / total as f64)
    }
}
