//! Shared test support: a brute-force HMM oracle and canned scenarios.
//!
//! The oracle enumerates every state path, so it is exponential in sequence
//! length and only usable for tiny instances; that is the point, it shares no
//! code or algorithmic structure with the scaled recursions it checks.

#![allow(dead_code)]

use cswitness::hmm::HmmModel;
use cswitness::sim::{
    Arrival, InterfererSet, Link, NodeConfig, NodeId, SimConfig, Topology,
};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn id(s: &str) -> NodeId {
    NodeId::new(s).unwrap()
}

/// Probability of the observations, summed over every state path.
fn total_probability(model: &HmmModel, obs: &[usize]) -> f64 {
    let n = model.n_states();
    let mut total = 0.0;
    let mut path = vec![0usize; obs.len()];
    loop {
        let mut w = model.pi()[path[0]] * model.b()[[path[0], obs[0]]];
        for t in 1..obs.len() {
            w *= model.a()[[path[t - 1], path[t]]] * model.b()[[path[t], obs[t]]];
        }
        total += w;
        // Odometer increment over the n^T paths.
        let mut pos = 0;
        loop {
            if pos == path.len() {
                return total;
            }
            path[pos] += 1;
            if path[pos] < n {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

pub fn brute_force_log_likelihood(model: &HmmModel, obs: &[usize]) -> f64 {
    total_probability(model, obs).ln()
}

/// Expected slots in each state given the observations, by path enumeration.
pub fn brute_force_occupancy(model: &HmmModel, obs: &[usize]) -> Vec<f64> {
    let n = model.n_states();
    let mut total = 0.0;
    let mut mass = vec![0.0; n];
    let mut path = vec![0usize; obs.len()];
    loop {
        let mut w = model.pi()[path[0]] * model.b()[[path[0], obs[0]]];
        for t in 1..obs.len() {
            w *= model.a()[[path[t - 1], path[t]]] * model.b()[[path[t], obs[t]]];
        }
        total += w;
        for &s in &path {
            mass[s] += w;
        }
        let mut pos = 0;
        loop {
            if pos == path.len() {
                for m in &mut mass {
                    *m /= total;
                }
                return mass;
            }
            path[pos] += 1;
            if path[pos] < n {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Model with uniformly random positive rows, normalized.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize) -> HmmModel {
    let mut normalized_row = |len: usize| -> Vec<f64> {
        let row: Vec<f64> = (0..len).map(|_| 0.05 + rng.random::<f64>()).collect();
        let sum: f64 = row.iter().sum();
        row.into_iter().map(|v| v / sum).collect()
    };
    let pi = Array1::from_vec(normalized_row(n));
    let mut a_flat = Vec::with_capacity(n * n);
    for _ in 0..n {
        a_flat.extend(normalized_row(n));
    }
    let mut b_flat = Vec::with_capacity(n * m);
    for _ in 0..n {
        b_flat.extend(normalized_row(m));
    }
    HmmModel::new(
        pi,
        Array2::from_shape_vec((n, n), a_flat).unwrap(),
        Array2::from_shape_vec((n, m), b_flat).unwrap(),
        (0..n).map(|i| format!("s{i}")).collect(),
    )
    .unwrap()
}

fn draw(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64>) -> usize {
    let mut u = rng.random::<f64>();
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

/// Sample a sequence from the model's generative process.
pub fn sample_sequence(model: &HmmModel, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = model.n_states();
    let m = model.n_symbols();
    let mut state = draw(rng, (0..n).map(|i| model.pi()[i]));
    let mut obs = Vec::with_capacity(len);
    for _ in 0..len {
        obs.push(draw(rng, (0..m).map(|k| model.b()[[state, k]])));
        state = draw(rng, (0..n).map(|j| model.a()[[state, j]]));
    }
    obs
}

/// Two saturated nodes in mutual sensing range, each the other's only
/// interferer: X carries `p_s_x`, Y is honest.
pub fn two_node_scenario(
    p_s_x: f64,
    total_slots: u64,
    cw: u64,
    packet_len: u64,
    seed: u64,
) -> (Topology, Vec<NodeConfig>, SimConfig) {
    let x = id("X");
    let y = id("Y");
    let topology = Topology {
        nodes: vec![x.clone(), y.clone()],
        defer_pairs: vec![(x.clone(), y.clone())],
        links: vec![
            Link {
                sender: x.clone(),
                receiver: y.clone(),
            },
            Link {
                sender: y.clone(),
                receiver: x.clone(),
            },
        ],
        interferers: vec![
            InterfererSet {
                receiver: y.clone(),
                sender: x.clone(),
                nodes: vec![y.clone()],
            },
            InterfererSet {
                receiver: x.clone(),
                sender: y.clone(),
                nodes: vec![x.clone()],
            },
        ],
    };
    let nodes = vec![
        NodeConfig {
            p_s: p_s_x,
            cw,
            ..NodeConfig::honest(x)
        },
        NodeConfig {
            cw,
            ..NodeConfig::honest(y)
        },
    ];
    let cfg = SimConfig {
        total_slots,
        packet_len,
        packet_bytes: 512,
        seed,
    };
    (topology, nodes, cfg)
}

/// Saturated clique: every pair senses each other, ring traffic
/// i -> (i+1) mod n, and every transmission collides with any overlapping
/// one. One p_s entry per node, in node order A, B, C, ...
pub fn clique_scenario(
    p_s: &[f64],
    total_slots: u64,
    cw: u64,
    packet_len: u64,
    seed: u64,
) -> (Topology, Vec<NodeConfig>, SimConfig) {
    assert!(p_s.len() >= 2 && p_s.len() <= 26);
    let ids: Vec<NodeId> = (0..p_s.len())
        .map(|i| id(&((b'A' + i as u8) as char).to_string()))
        .collect();
    let mut defer_pairs = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            defer_pairs.push((ids[i].clone(), ids[j].clone()));
        }
    }
    let mut links = Vec::new();
    let mut interferers = Vec::new();
    for i in 0..ids.len() {
        let sender = ids[i].clone();
        let receiver = ids[(i + 1) % ids.len()].clone();
        links.push(Link {
            sender: sender.clone(),
            receiver: receiver.clone(),
        });
        interferers.push(InterfererSet {
            receiver,
            nodes: ids.iter().filter(|&n| n != &sender).cloned().collect(),
            sender,
        });
    }
    let topology = Topology {
        nodes: ids.clone(),
        defer_pairs,
        links,
        interferers,
    };
    let nodes: Vec<NodeConfig> = ids
        .into_iter()
        .zip(p_s)
        .map(|(nid, &p)| NodeConfig {
            p_s: p,
            cw,
            ..NodeConfig::honest(nid)
        })
        .collect();
    let cfg = SimConfig {
        total_slots,
        packet_len,
        packet_bytes: 512,
        seed,
    };
    (topology, nodes, cfg)
}

/// Keep saturated arrivals explicit at call sites that want Bernoulli.
pub fn with_arrival(mut nodes: Vec<NodeConfig>, rate: f64) -> Vec<NodeConfig> {
    for n in &mut nodes {
        n.arrival = Arrival::Bernoulli(rate);
    }
    nodes
}
