//! The slot loop.
//!
//! Each slot runs four phases in fixed node order: completions, arrivals and
//! backoff draws, carrier-sense decisions, transmission starts. All
//! randomness flows through one seeded ChaCha8 stream consumed in phase
//! order, which is what makes runs reproducible byte for byte.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Arrival, DeferralEvent, Delivery, LinkDeliveries, NodeConfig, NodeId, SimConfig, SimError,
    SimOutput, Topology, TransmissionRecord,
};

struct Compiled {
    ids: Vec<NodeId>,
    /// Per node, ascending indices of mutual-sensing neighbors.
    defer: Vec<Vec<usize>>,
    /// Per node, index into `links` of its single outgoing link, if any.
    outgoing: Vec<Option<usize>>,
    links: Vec<(usize, usize)>,
    /// Per link, node indices whose overlapping transmissions corrupt it.
    interferers: Vec<Vec<usize>>,
    p_s: Vec<f64>,
    arrival: Vec<Arrival>,
    cw: Vec<u64>,
    retry_limit: Vec<u32>,
}

fn compile(topology: &Topology, nodes: &[NodeConfig], cfg: &SimConfig) -> Result<Compiled, SimError> {
    if topology.nodes.is_empty() {
        return Err(SimError::EmptyTopology);
    }
    if cfg.packet_len == 0 {
        return Err(SimError::ZeroPacketLen);
    }
    if cfg.packet_len > cfg.total_slots {
        return Err(SimError::PacketTooLong {
            packet_len: cfg.packet_len,
            total_slots: cfg.total_slots,
        });
    }

    let n = topology.nodes.len();
    for (i, id) in topology.nodes.iter().enumerate() {
        if topology.nodes[..i].contains(id) {
            return Err(SimError::DuplicateNode(id.clone()));
        }
    }
    let index = |id: &NodeId, context: &'static str| -> Result<usize, SimError> {
        topology
            .nodes
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| SimError::UnknownNode {
                context,
                id: id.clone(),
            })
    };

    let mut p_s = vec![0.0; n];
    let mut arrival = vec![Arrival::Saturated; n];
    let mut cw = vec![0u64; n];
    let mut retry_limit = vec![0u32; n];
    let mut seen = vec![false; n];
    for nc in nodes {
        let i = index(&nc.id, "node configs").map_err(|_| SimError::ConfigWithoutNode(nc.id.clone()))?;
        if seen[i] {
            return Err(SimError::DuplicateNode(nc.id.clone()));
        }
        seen[i] = true;
        if !(0.0..=1.0).contains(&nc.p_s) {
            return Err(SimError::InvalidProbability {
                id: nc.id.clone(),
                what: "p_s",
                value: nc.p_s,
            });
        }
        if let Arrival::Bernoulli(p) = nc.arrival {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidProbability {
                    id: nc.id.clone(),
                    what: "arrival probability",
                    value: p,
                });
            }
        }
        if nc.cw == 0 {
            return Err(SimError::ZeroContentionWindow(nc.id.clone()));
        }
        p_s[i] = nc.p_s;
        arrival[i] = nc.arrival;
        cw[i] = nc.cw;
        retry_limit[i] = nc.retry_limit;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(SimError::MissingNodeConfig(topology.nodes[i].clone()));
    }

    let mut defer = vec![Vec::new(); n];
    for (a, b) in &topology.defer_pairs {
        if a == b {
            return Err(SimError::SelfDeferPair(a.clone()));
        }
        let ia = index(a, "defer_pairs")?;
        let ib = index(b, "defer_pairs")?;
        if !defer[ia].contains(&ib) {
            defer[ia].push(ib);
            defer[ib].push(ia);
        }
    }
    for d in &mut defer {
        d.sort_unstable();
    }

    let mut links = Vec::new();
    let mut outgoing = vec![None; n];
    for l in &topology.links {
        if l.sender == l.receiver {
            return Err(SimError::SelfLink(l.sender.clone()));
        }
        let s = index(&l.sender, "links")?;
        let r = index(&l.receiver, "links")?;
        if outgoing[s].is_some() {
            return Err(SimError::DuplicateLinkSender(l.sender.clone()));
        }
        outgoing[s] = Some(links.len());
        links.push((s, r));
    }

    let mut interferers = vec![Vec::new(); links.len()];
    let mut have_set = vec![false; links.len()];
    for set in &topology.interferers {
        let s = index(&set.sender, "interferers")?;
        let r = index(&set.receiver, "interferers")?;
        let l = links
            .iter()
            .position(|&(ls, lr)| ls == s && lr == r)
            .ok_or_else(|| SimError::InterferersWithoutLink {
                receiver: set.receiver.clone(),
                sender: set.sender.clone(),
            })?;
        if have_set[l] {
            return Err(SimError::DuplicateInterfererSet {
                receiver: set.receiver.clone(),
                sender: set.sender.clone(),
            });
        }
        have_set[l] = true;
        for id in &set.nodes {
            let j = index(id, "interferers")?;
            if j != s && !interferers[l].contains(&j) {
                interferers[l].push(j);
            }
        }
        interferers[l].sort_unstable();
    }

    Ok(Compiled {
        ids: topology.nodes.clone(),
        defer,
        outgoing,
        links,
        interferers,
        p_s,
        arrival,
        cw,
        retry_limit,
    })
}

struct Hol {
    packet_id: u64,
    arrival_slot: u64,
    attempt: u32,
    backoff: Option<u64>,
}

struct Active {
    packet_id: u64,
    arrival_slot: u64,
    attempt: u32,
    start: u64,
    end: u64,
}

#[derive(Default)]
struct NodeState {
    queue: VecDeque<u64>,
    next_packet_id: u64,
    hol: Option<Hol>,
    active: Option<Active>,
    /// Completed transmission spans, chronological. Uniform packet length
    /// keeps them sorted by end as well, so overlap scans walk from the back.
    spans: Vec<(u64, u64)>,
}

/// Run one simulation. Output is deterministic in (topology, nodes, cfg).
pub fn run_simulation(
    topology: &Topology,
    nodes: &[NodeConfig],
    cfg: &SimConfig,
) -> Result<SimOutput, SimError> {
    let c = compile(topology, nodes, cfg)?;
    let n = c.ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut state: Vec<NodeState> = (0..n).map(|_| NodeState::default()).collect();
    // Perception of the neighbor's current busy period, keyed by its start
    // slot: one roll per encounter, remembered for the period's lifetime.
    let mut perception: Vec<Vec<Option<(u64, bool)>>> = vec![vec![None; n]; n];

    let mut records: Vec<TransmissionRecord> = Vec::new();
    let mut events: Vec<DeferralEvent> = Vec::new();
    let mut link_deliveries: Vec<Vec<Delivery>> = vec![Vec::new(); c.links.len()];
    let mut starters: Vec<usize> = Vec::new();

    for t in 0..=cfg.total_slots {
        // Phase 1: settle transmissions that ended before this slot. The
        // extra iteration at t == total_slots flushes the tail; phases 2-4
        // are skipped there.
        for idx in 0..n {
            let ended = matches!(&state[idx].active, Some(a) if a.end < t);
            if !ended {
                continue;
            }
            let a = state[idx].active.take().unwrap();
            let link = c.outgoing[idx].expect("transmitting node has a link");
            let mut success = true;
            'interf: for &j in &c.interferers[link] {
                if let Some(oa) = &state[j].active {
                    if oa.start <= a.end && a.start <= oa.end {
                        success = false;
                        break 'interf;
                    }
                }
                for &(s2, e2) in state[j].spans.iter().rev() {
                    if e2 < a.start {
                        break;
                    }
                    if s2 <= a.end {
                        success = false;
                        break 'interf;
                    }
                }
            }
            records.push(TransmissionRecord {
                node_id: c.ids[idx].clone(),
                packet_id: a.packet_id,
                attempt: a.attempt,
                start_slot: a.start,
                end_slot: a.end,
                success,
            });
            state[idx].spans.push((a.start, a.end));
            if success {
                link_deliveries[link].push(Delivery {
                    packet_id: a.packet_id,
                    arrival_slot: a.arrival_slot,
                    completion_slot: a.end,
                    delivered: true,
                });
            } else if a.attempt <= c.retry_limit[idx] {
                state[idx].hol = Some(Hol {
                    packet_id: a.packet_id,
                    arrival_slot: a.arrival_slot,
                    attempt: a.attempt + 1,
                    backoff: None,
                });
            } else {
                link_deliveries[link].push(Delivery {
                    packet_id: a.packet_id,
                    arrival_slot: a.arrival_slot,
                    completion_slot: a.end,
                    delivered: false,
                });
            }
        }
        if t == cfg.total_slots {
            break;
        }

        // Phase 2: arrivals, head-of-line fill, backoff draws. Only nodes
        // with an outgoing link generate traffic.
        for idx in 0..n {
            if c.outgoing[idx].is_none() {
                continue;
            }
            if let Arrival::Bernoulli(p) = c.arrival[idx] {
                if rng.random_bool(p) {
                    state[idx].queue.push_back(t);
                }
            }
            if state[idx].hol.is_none() && state[idx].active.is_none() {
                let arrival_slot = match c.arrival[idx] {
                    Arrival::Saturated => Some(t),
                    Arrival::Bernoulli(_) => state[idx].queue.pop_front(),
                };
                if let Some(arrival_slot) = arrival_slot {
                    let packet_id = state[idx].next_packet_id;
                    state[idx].next_packet_id += 1;
                    state[idx].hol = Some(Hol {
                        packet_id,
                        arrival_slot,
                        attempt: 1,
                        backoff: None,
                    });
                }
            }
            if let Some(h) = &mut state[idx].hol {
                if h.backoff.is_none() {
                    h.backoff = Some(rng.random_range(0..c.cw[idx]));
                }
            }
        }

        // Phase 3: carrier sense. A contender checks each sensing neighbor's
        // ongoing transmission (necessarily started before t); the first
        // decision against a given busy period rolls perception and logs a
        // DeferralEvent, later slots reuse the rolled outcome.
        starters.clear();
        for idx in 0..n {
            if state[idx].active.is_some() || state[idx].hol.is_none() {
                continue;
            }
            let mut busy = false;
            for &j in &c.defer[idx] {
                let Some(period_start) = state[j].active.as_ref().map(|a| a.start) else {
                    continue;
                };
                let known = matches!(perception[idx][j], Some((ps, _)) if ps == period_start);
                if !known {
                    let perceived = rng.random_bool(1.0 - c.p_s[idx]);
                    perception[idx][j] = Some((period_start, perceived));
                    events.push(DeferralEvent {
                        deferrer: c.ids[idx].clone(),
                        transmitter: c.ids[j].clone(),
                        slot: t,
                        deferred: perceived,
                    });
                }
                if perception[idx][j].unwrap().1 {
                    busy = true;
                }
            }
            if !busy {
                let backoff = state[idx].hol.as_mut().unwrap().backoff.as_mut().unwrap();
                if *backoff == 0 {
                    starters.push(idx);
                } else {
                    *backoff -= 1;
                }
            }
        }

        // Phase 4: simultaneous starts. Ties are legal and collide later via
        // the interferer rule. A packet that cannot finish by the horizon
        // stays head-of-line and never airs.
        for &idx in &starters {
            if t + cfg.packet_len <= cfg.total_slots {
                let h = state[idx].hol.take().unwrap();
                state[idx].active = Some(Active {
                    packet_id: h.packet_id,
                    arrival_slot: h.arrival_slot,
                    attempt: h.attempt,
                    start: t,
                    end: t + cfg.packet_len - 1,
                });
            }
        }
    }

    records.sort_by(|a, b| {
        (a.start_slot, &a.node_id, a.attempt).cmp(&(b.start_slot, &b.node_id, b.attempt))
    });

    let deliveries = c
        .links
        .iter()
        .zip(link_deliveries)
        .map(|(&(s, r), deliveries)| LinkDeliveries {
            sender: c.ids[s].clone(),
            receiver: c.ids[r].clone(),
            deliveries,
        })
        .collect();

    Ok(SimOutput {
        total_slots: cfg.total_slots,
        packet_bytes: cfg.packet_bytes,
        transmissions: records,
        deferral_events: events,
        deliveries,
    })
}
