//! Scenario config: JSON schema, defaults, and validation.
//!
//! Parsing is two-phase. Serde handles shape and unknown-key rejection;
//! a validation pass then checks every value and cross-reference, collecting
//! all problems at once as `path: message` entries instead of stopping at
//! the first.

use serde::Deserialize;
use thiserror::Error;

use crate::detector::DetectorConfig;
use crate::sim::{Arrival, InterfererSet, Link, NodeConfig, NodeId, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid UTF-8: {0}")]
    Encoding(String),
    #[error("config JSON: {0}")]
    Syntax(String),
    #[error("invalid config:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

/// Per-sniffer declaration; capture seeds are derived from the master seed
/// at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnifferDecl {
    pub id: String,
    pub coverage: Vec<NodeId>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub max_iters: u32,
    pub tol: f64,
    pub restarts: u32,
    pub freeze_emissions: bool,
    /// Emission noise of the pair template.
    pub epsilon: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            max_iters: 100,
            tol: 1e-4,
            restarts: 3,
            freeze_emissions: true,
            epsilon: 0.02,
        }
    }
}

/// A fully validated scenario: every id resolves, every value is in range.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub topology: Topology,
    pub nodes: Vec<NodeConfig>,
    pub total_slots: u64,
    pub packet_len: u64,
    pub packet_bytes: u64,
    pub sniffers: Vec<SnifferDecl>,
    pub train: TrainSettings,
    pub detector: DetectorConfig,
    /// Inclusive observation window for inference.
    pub window: (u64, u64),
    pub bucket_slots: u64,
    /// Wall-clock seconds one slot represents; only the metrics stage uses it.
    pub slot_seconds: f64,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    nodes: Option<Vec<RawNode>>,
    #[serde(default)]
    defer_pairs: Vec<(String, String)>,
    #[serde(default)]
    links: Vec<RawLink>,
    #[serde(default)]
    interferers: Vec<RawInterferers>,
    sim: Option<RawSim>,
    #[serde(default)]
    sniffers: Vec<RawSniffer>,
    train: Option<RawTrain>,
    detector: Option<RawDetector>,
    window: Option<RawWindow>,
    bucket_slots: Option<u64>,
    slot_seconds: Option<f64>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    p_s: Option<f64>,
    arrival: Option<RawArrival>,
    cw: Option<u64>,
    retry_limit: Option<u32>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawArrival {
    Name(String),
    Rate(f64),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    sender: String,
    receiver: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterferers {
    receiver: String,
    sender: String,
    nodes: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    total_slots: Option<u64>,
    packet_len: Option<u64>,
    packet_bytes: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSniffer {
    id: String,
    coverage: Vec<String>,
    loss: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    max_iters: Option<u32>,
    tol: Option<f64>,
    restarts: Option<u32>,
    freeze_emissions: Option<bool>,
    epsilon: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    tau_witness: Option<f64>,
    tau_selfish: Option<f64>,
    k_min: Option<u32>,
    min_evidence_slots: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    first_slot: Option<u64>,
    last_slot: Option<u64>,
}

struct Check {
    errors: Vec<FieldError>,
}

impl Check {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn node_id(&mut self, path: String, raw: &str) -> Option<NodeId> {
        match NodeId::new(raw) {
            Ok(id) => Some(id),
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }

    fn known(&mut self, path: String, ids: &[NodeId], raw: &str) -> Option<NodeId> {
        let id = self.node_id(path.clone(), raw)?;
        if ids.contains(&id) {
            Some(id)
        } else {
            self.push(path, format!("unknown node {id}"));
            None
        }
    }

    fn unit(&mut self, path: String, value: f64, what: &str) -> f64 {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            self.push(path, format!("{what} {value} outside [0, 1]"));
        }
        value
    }
}

/// Parse and fully validate a scenario config.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mut ck = Check { errors: Vec::new() };

    // Nodes first: everything else resolves against their ids.
    let raw_nodes = raw.nodes.unwrap_or_default();
    if raw_nodes.is_empty() {
        ck.push("nodes", "at least one node is required");
    }
    let mut node_ids: Vec<NodeId> = Vec::new();
    let mut nodes: Vec<NodeConfig> = Vec::new();
    for (i, rn) in raw_nodes.iter().enumerate() {
        let Some(id) = ck.node_id(format!("nodes[{i}].id"), &rn.id) else {
            continue;
        };
        if node_ids.contains(&id) {
            ck.push(format!("nodes[{i}].id"), format!("duplicate node id {id}"));
            continue;
        }
        let p_s = ck.unit(format!("nodes[{i}].p_s"), rn.p_s.unwrap_or(0.0), "p_s");
        let arrival = match &rn.arrival {
            None => Arrival::Saturated,
            Some(RawArrival::Name(name)) if name == "saturated" => Arrival::Saturated,
            Some(RawArrival::Name(name)) => {
                ck.push(
                    format!("nodes[{i}].arrival"),
                    format!("expected \"saturated\" or a rate in [0, 1], got {name:?}"),
                );
                Arrival::Saturated
            }
            Some(RawArrival::Rate(p)) => {
                Arrival::Bernoulli(ck.unit(format!("nodes[{i}].arrival"), *p, "arrival rate"))
            }
        };
        let cw = rn.cw.unwrap_or(16);
        if cw == 0 {
            ck.push(format!("nodes[{i}].cw"), "contention window must be at least 1");
        }
        node_ids.push(id.clone());
        nodes.push(NodeConfig {
            id,
            p_s,
            arrival,
            cw,
            retry_limit: rn.retry_limit.unwrap_or(4),
        });
    }

    let mut defer_pairs = Vec::new();
    for (i, (a, b)) in raw.defer_pairs.iter().enumerate() {
        let pa = ck.known(format!("defer_pairs[{i}]"), &node_ids, a);
        let pb = ck.known(format!("defer_pairs[{i}]"), &node_ids, b);
        if let (Some(pa), Some(pb)) = (pa, pb) {
            if pa == pb {
                ck.push(
                    format!("defer_pairs[{i}]"),
                    format!("pair ({pa}, {pb}) pairs a node with itself"),
                );
            } else {
                defer_pairs.push((pa, pb));
            }
        }
    }

    let mut links = Vec::new();
    for (i, rl) in raw.links.iter().enumerate() {
        let s = ck.known(format!("links[{i}].sender"), &node_ids, &rl.sender);
        let r = ck.known(format!("links[{i}].receiver"), &node_ids, &rl.receiver);
        if let (Some(s), Some(r)) = (s, r) {
            if s == r {
                ck.push(format!("links[{i}]"), format!("link from {s} to itself"));
                continue;
            }
            if links.iter().any(|l: &Link| l.sender == s) {
                ck.push(
                    format!("links[{i}].sender"),
                    format!("node {s} already has an outgoing link"),
                );
                continue;
            }
            links.push(Link {
                sender: s,
                receiver: r,
            });
        }
    }

    let mut interferers = Vec::new();
    for (i, ri) in raw.interferers.iter().enumerate() {
        let r = ck.known(format!("interferers[{i}].receiver"), &node_ids, &ri.receiver);
        let s = ck.known(format!("interferers[{i}].sender"), &node_ids, &ri.sender);
        let mut members = Vec::new();
        for (j, m) in ri.nodes.iter().enumerate() {
            if let Some(m) = ck.known(format!("interferers[{i}].nodes[{j}]"), &node_ids, m) {
                members.push(m);
            }
        }
        if let (Some(r), Some(s)) = (r, s) {
            if !links.iter().any(|l| l.sender == s && l.receiver == r) {
                ck.push(
                    format!("interferers[{i}]"),
                    format!("no link from {s} to {r}"),
                );
                continue;
            }
            if interferers
                .iter()
                .any(|x: &InterfererSet| x.receiver == r && x.sender == s)
            {
                ck.push(
                    format!("interferers[{i}]"),
                    format!("duplicate interferer set for link ({s}, {r})"),
                );
                continue;
            }
            interferers.push(InterfererSet {
                receiver: r,
                sender: s,
                nodes: members,
            });
        }
    }

    let (total_slots, packet_len, packet_bytes) = match &raw.sim {
        None => {
            ck.push("sim", "required section is missing");
            (1, 1, 1)
        }
        Some(rs) => {
            let total = match rs.total_slots {
                None => {
                    ck.push("sim.total_slots", "required field is missing");
                    1
                }
                Some(0) => {
                    ck.push("sim.total_slots", "must be at least 1");
                    1
                }
                Some(v) => v,
            };
            let plen = match rs.packet_len {
                None => {
                    ck.push("sim.packet_len", "required field is missing");
                    1
                }
                Some(0) => {
                    ck.push("sim.packet_len", "must be at least 1");
                    1
                }
                Some(v) => v,
            };
            if rs.total_slots.is_some() && rs.packet_len.is_some() && plen > total {
                ck.push(
                    "sim.packet_len",
                    format!("packet_len {plen} exceeds total_slots {total}"),
                );
            }
            let bytes = match rs.packet_bytes {
                Some(0) => {
                    ck.push("sim.packet_bytes", "must be at least 1");
                    1
                }
                Some(v) => v,
                None => 512,
            };
            (total, plen, bytes)
        }
    };

    let mut sniffers = Vec::new();
    for (i, rs) in raw.sniffers.iter().enumerate() {
        let id_ok = !rs.id.is_empty()
            && rs
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !id_ok {
            ck.push(
                format!("sniffers[{i}].id"),
                format!("sniffer id {:?} is empty or contains characters outside [A-Za-z0-9_-]", rs.id),
            );
            continue;
        }
        if sniffers.iter().any(|s: &SnifferDecl| s.id == rs.id) {
            ck.push(
                format!("sniffers[{i}].id"),
                format!("duplicate sniffer id {}", rs.id),
            );
            continue;
        }
        let mut coverage = Vec::new();
        for (j, c) in rs.coverage.iter().enumerate() {
            if let Some(c) = ck.known(format!("sniffers[{i}].coverage[{j}]"), &node_ids, c) {
                coverage.push(c);
            }
        }
        let loss = ck.unit(format!("sniffers[{i}].loss"), rs.loss.unwrap_or(0.0), "loss");
        sniffers.push(SnifferDecl {
            id: rs.id.clone(),
            coverage,
            loss,
        });
    }

    let mut train = TrainSettings::default();
    if let Some(rt) = &raw.train {
        if let Some(v) = rt.max_iters {
            if v == 0 {
                ck.push("train.max_iters", "must be at least 1");
            }
            train.max_iters = v;
        }
        if let Some(v) = rt.tol {
            if !v.is_finite() || v < 0.0 {
                ck.push("train.tol", format!("tolerance {v} must be finite and >= 0"));
            }
            train.tol = v;
        }
        if let Some(v) = rt.restarts {
            if v == 0 {
                ck.push("train.restarts", "must be at least 1");
            }
            train.restarts = v;
        }
        if let Some(v) = rt.freeze_emissions {
            train.freeze_emissions = v;
        }
        if let Some(v) = rt.epsilon {
            if !v.is_finite() || !(0.0..0.5).contains(&v) {
                ck.push("train.epsilon", format!("epsilon {v} outside [0, 0.5)"));
            }
            train.epsilon = v;
        }
    }

    let mut detector = DetectorConfig::default();
    if let Some(rd) = &raw.detector {
        if let Some(v) = rd.tau_witness {
            detector.tau_witness = ck.unit("detector.tau_witness".into(), v, "tau_witness");
        }
        if let Some(v) = rd.tau_selfish {
            detector.tau_selfish = ck.unit("detector.tau_selfish".into(), v, "tau_selfish");
        }
        if let Some(v) = rd.k_min {
            if v == 0 {
                ck.push("detector.k_min", "must be at least 1");
            }
            detector.k_min = v;
        }
        if let Some(v) = rd.min_evidence_slots {
            if !v.is_finite() || v < 0.0 {
                ck.push(
                    "detector.min_evidence_slots",
                    format!("{v} must be finite and >= 0"),
                );
            }
            detector.min_evidence_slots = v;
        }
    }

    let window = {
        let first = raw.window.as_ref().and_then(|w| w.first_slot).unwrap_or(0);
        let last = raw
            .window
            .as_ref()
            .and_then(|w| w.last_slot)
            .unwrap_or(total_slots.saturating_sub(1));
        if first > last {
            ck.push(
                "window",
                format!("first_slot {first} exceeds last_slot {last}"),
            );
        }
        if raw.sim.as_ref().is_some_and(|s| s.total_slots.is_some()) && last >= total_slots {
            ck.push(
                "window.last_slot",
                format!("{last} outside horizon of {total_slots} slots"),
            );
        }
        (first, last)
    };

    let bucket_slots = raw.bucket_slots.unwrap_or(1000);
    if bucket_slots == 0 {
        ck.push("bucket_slots", "must be at least 1");
    }
    let slot_seconds = raw.slot_seconds.unwrap_or(1.0);
    if !(slot_seconds > 0.0) || !slot_seconds.is_finite() {
        ck.push("slot_seconds", format!("{slot_seconds} must be positive"));
    }

    if !ck.errors.is_empty() {
        return Err(ConfigError::Invalid(ck.errors));
    }

    Ok(ScenarioConfig {
        topology: Topology {
            nodes: node_ids,
            defer_pairs,
            links,
            interferers,
        },
        nodes,
        total_slots,
        packet_len,
        packet_bytes,
        sniffers,
        train,
        detector,
        window,
        bucket_slots,
        slot_seconds,
        seed: raw.seed.unwrap_or(0),
    })
}
