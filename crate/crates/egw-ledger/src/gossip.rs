//! Push-gossip dissemination over a deterministic simulated network.
//!
//! Rounds are discrete. Every informed node contacts `fanout` randomly
//! chosen neighbors per round without knowing whether they are already
//! informed, but it never contacts the same neighbor twice (each node walks
//! its own seeded shuffle of its neighbor list). Per-hop latency is a seeded
//! uniform draw used only for receipt-time reporting. Because every sender
//! eventually contacts all of its neighbors, a connected graph is fully
//! informed after finitely many rounds, and the broadcast terminates once a
//! round delivers nothing new and no further delivery is possible.

use std::collections::{BTreeMap, BTreeSet};

use egw_canon::{sha256, Hash32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::pos::Validator;
use crate::LedgerError;

#[derive(Debug, Clone)]
pub struct SimNet {
    nodes: Vec<String>,
    adjacency: Vec<Vec<usize>>,
    fanout: usize,
    latency_ms: (u64, u64),
    seed: u64,
}

impl SimNet {
    /// Build a network from named nodes and undirected edges.
    pub fn new(
        nodes: Vec<String>,
        edges: &[(String, String)],
        fanout: usize,
        latency_ms: (u64, u64),
        seed: u64,
    ) -> Result<Self, LedgerError> {
        if nodes.is_empty() {
            return Err(LedgerError::InvalidParameter("network needs nodes".into()));
        }
        let unique: BTreeSet<&String> = nodes.iter().collect();
        if unique.len() != nodes.len() {
            return Err(LedgerError::InvalidParameter("node names must be unique".into()));
        }
        if fanout == 0 {
            return Err(LedgerError::InvalidParameter("fanout must be at least 1".into()));
        }
        if latency_ms.0 > latency_ms.1 {
            return Err(LedgerError::InvalidParameter(
                "latency range must satisfy lo <= hi".into(),
            ));
        }
        let index: BTreeMap<&str, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut neighbor_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes.len()];
        for (a, b) in edges {
            let ia = *index.get(a.as_str()).ok_or_else(|| {
                LedgerError::InvalidParameter(format!("edge references unknown node {a}"))
            })?;
            let ib = *index.get(b.as_str()).ok_or_else(|| {
                LedgerError::InvalidParameter(format!("edge references unknown node {b}"))
            })?;
            if ia == ib {
                return Err(LedgerError::InvalidParameter(format!("self-loop on node {a}")));
            }
            neighbor_sets[ia].insert(ib);
            neighbor_sets[ib].insert(ia);
        }
        Ok(SimNet {
            nodes,
            adjacency: neighbor_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            fanout,
            latency_ms,
            seed,
        })
    }

    /// Every pair of nodes connected.
    pub fn fully_connected(
        nodes: Vec<String>,
        fanout: usize,
        latency_ms: (u64, u64),
        seed: u64,
    ) -> Result<Self, LedgerError> {
        let edges: Vec<(String, String)> = (0..nodes.len())
            .flat_map(|i| (i + 1..nodes.len()).map(move |j| (i, j)))
            .map(|(i, j)| (nodes[i].clone(), nodes[j].clone()))
            .collect();
        SimNet::new(nodes, &edges, fanout, latency_ms, seed)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub round: u32,
    pub receipt_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub origin: String,
    pub message_digest: Hash32,
    /// Every reached node with the round and simulated time of its first
    /// receipt; unreached nodes are absent.
    pub deliveries: BTreeMap<String, Delivery>,
}

impl DeliveryReport {
    /// Highest round at which any node first received the message.
    pub fn rounds(&self) -> u32 {
        self.deliveries.values().map(|d| d.round).max().unwrap_or(0)
    }
}

/// Broadcast `message` from `origin` and report who received it when.
pub fn gossip_broadcast(
    net: &SimNet,
    origin: &str,
    message: &[u8],
) -> Result<DeliveryReport, LedgerError> {
    let origin_idx = net
        .nodes
        .iter()
        .position(|n| n == origin)
        .ok_or_else(|| LedgerError::InvalidParameter(format!("unknown origin node {origin}")))?;

    let mut rng = ChaCha12Rng::seed_from_u64(net.seed);
    let mut informed: Vec<Option<Delivery>> = vec![None; net.nodes.len()];
    informed[origin_idx] = Some(Delivery { round: 0, receipt_time_ms: 0 });
    // Per-sender contact plan: a seeded shuffle of its neighbors, walked
    // `fanout` entries per round, created when the node first forwards.
    let mut plans: Vec<Option<(Vec<usize>, usize)>> = vec![None; net.nodes.len()];

    let mut round: u32 = 0;
    loop {
        round += 1;
        let mut arrivals: BTreeMap<usize, u64> = BTreeMap::new();
        let mut exhausted = true;
        for sender in 0..net.nodes.len() {
            let Some(delivery) = informed[sender] else { continue };
            if net.adjacency[sender].is_empty() {
                continue;
            }
            let (order, cursor) = plans[sender].get_or_insert_with(|| {
                let mut order = net.adjacency[sender].clone();
                shuffle(&mut order, &mut rng);
                (order, 0)
            });
            let take = net.fanout.min(order.len() - *cursor);
            for &target in &order[*cursor..*cursor + take] {
                let latency = rng.gen_range(net.latency_ms.0..=net.latency_ms.1);
                let arrival = delivery.receipt_time_ms + latency;
                if informed[target].is_none() {
                    arrivals
                        .entry(target)
                        .and_modify(|t| *t = (*t).min(arrival))
                        .or_insert(arrival);
                }
            }
            *cursor += take;
            if *cursor < order.len() {
                exhausted = false;
            }
        }
        let progressed = !arrivals.is_empty();
        for (target, receipt_time_ms) in arrivals {
            informed[target] = Some(Delivery { round, receipt_time_ms });
        }
        if progressed {
            continue;
        }
        let frontier_open = (0..net.nodes.len()).any(|i| {
            informed[i].is_none() && net.adjacency[i].iter().any(|&n| informed[n].is_some())
        });
        // A quiet round ends the broadcast once nothing more can arrive:
        // either every sender has worked through its plan or no uninformed
        // node borders an informed one.
        if exhausted || !frontier_open {
            break;
        }
    }

    Ok(DeliveryReport {
        origin: origin.to_string(),
        message_digest: sha256(message),
        deliveries: informed
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| (net.nodes[i].clone(), d)))
            .collect(),
    })
}

/// In-place Fisher–Yates shuffle.
fn shuffle(items: &mut [usize], rng: &mut ChaCha12Rng) {
    for i in (1..items.len()).rev() {
        items.swap(i, rng.gen_range(0..=i));
    }
}

/// Network topology described in a scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    FullMesh,
    Edges(Vec<(String, String)>),
}

/// On-disk description of a simulation run: nodes, stakes, topology, fanout,
/// latency range, seed and round count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub nodes: Vec<String>,
    pub stakes: BTreeMap<String, u64>,
    pub topology: Topology,
    pub fanout: usize,
    pub latency_ms: (u64, u64),
    pub seed: u64,
    pub rounds: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, LedgerError> {
        serde_json::from_str(text).map_err(|e| LedgerError::Malformed {
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_value(self).expect("config serializes").to_string()
    }

    pub fn build_net(&self) -> Result<SimNet, LedgerError> {
        let edges = match &self.topology {
            Topology::FullMesh => {
                return SimNet::fully_connected(
                    self.nodes.clone(),
                    self.fanout,
                    self.latency_ms,
                    self.seed,
                )
            }
            Topology::Edges(edges) => edges.clone(),
        };
        SimNet::new(self.nodes.clone(), &edges, self.fanout, self.latency_ms, self.seed)
    }

    /// Stake table as validators; every staked name must be a known node.
    pub fn validators(&self) -> Result<Vec<Validator>, LedgerError> {
        for name in self.stakes.keys() {
            if !self.nodes.contains(name) {
                return Err(LedgerError::InvalidParameter(format!(
                    "stake entry references unknown node {name}"
                )));
            }
        }
        Ok(self
            .stakes
            .iter()
            .map(|(id, stake)| Validator { id: id.clone(), stake: *stake })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("node-{i:02}")).collect()
    }

    #[test]
    fn test_full_mesh_27_nodes_reaches_everyone_within_5_rounds() {
        // Simulation oracle over 100 seeds: fanout 3 on a 27-node full mesh
        // must inform every node within 5 rounds.
        for seed in 0..100 {
            let net = SimNet::fully_connected(names(27), 3, (5, 50), seed).unwrap();
            let report = gossip_broadcast(&net, "node-00", b"block announcement").unwrap();
            assert_eq!(report.deliveries.len(), 27, "seed {seed} missed nodes");
            assert!(report.rounds() <= 5, "seed {seed} needed {} rounds", report.rounds());
        }
    }

    #[test]
    fn test_single_node_network_reports_only_origin() {
        let net = SimNet::new(vec!["solo".into()], &[], 3, (1, 2), 0).unwrap();
        let report = gossip_broadcast(&net, "solo", b"m").unwrap();
        assert_eq!(report.deliveries.len(), 1);
        assert_eq!(report.deliveries["solo"], Delivery { round: 0, receipt_time_ms: 0 });
    }

    #[test]
    fn test_disconnected_node_is_absent_from_report() {
        let mut nodes = names(5);
        nodes.push("island".into());
        let edges: Vec<(String, String)> = (0..4)
            .map(|i| (format!("node-{i:02}"), format!("node-{:02}", i + 1)))
            .collect();
        let net = SimNet::new(nodes, &edges, 2, (1, 5), 3).unwrap();
        let report = gossip_broadcast(&net, "node-00", b"m").unwrap();
        assert_eq!(report.deliveries.len(), 5);
        assert!(!report.deliveries.contains_key("island"));
    }

    #[test]
    fn test_unknown_origin_is_rejected() {
        let net = SimNet::fully_connected(names(3), 1, (1, 1), 0).unwrap();
        assert!(matches!(
            gossip_broadcast(&net, "ghost", b"m"),
            Err(LedgerError::InvalidParameter(_))
        ));
    }

    #[test]
    fn test_broadcast_is_bit_reproducible() {
        let net = SimNet::fully_connected(names(12), 2, (5, 20), 42).unwrap();
        let a = gossip_broadcast(&net, "node-03", b"m").unwrap();
        let b = gossip_broadcast(&net, "node-03", b"m").unwrap();
        assert_eq!(a, b);
        let other = SimNet::fully_connected(names(12), 2, (5, 20), 43).unwrap();
        let c = gossip_broadcast(&other, "node-03", b"m").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn test_receipt_times_respect_latency_bounds() {
        let net = SimNet::fully_connected(names(10), 2, (7, 9), 5).unwrap();
        let report = gossip_broadcast(&net, "node-00", b"m").unwrap();
        for (name, d) in &report.deliveries {
            if name != "node-00" {
                // At least one hop happened, and a node informed at round r
                // sits at most r hops from the origin in arrival time.
                assert!(d.round >= 1);
                assert!(d.receipt_time_ms >= 7);
                assert!(d.receipt_time_ms <= 9 * d.round as u64);
            }
        }
    }

    #[test]
    fn test_line_graph_is_fully_informed_with_fanout_one() {
        // Worst connectivity: each interior node has two neighbors and may
        // contact its informed parent before its uninformed child, so a hop
        // costs at most two rounds.
        let nodes = names(8);
        let edges: Vec<(String, String)> = (0..7)
            .map(|i| (format!("node-{i:02}"), format!("node-{:02}", i + 1)))
            .collect();
        let net = SimNet::new(nodes, &edges, 1, (1, 1), 9).unwrap();
        let report = gossip_broadcast(&net, "node-00", b"m").unwrap();
        assert_eq!(report.deliveries.len(), 8);
        assert!(report.rounds() <= 2 * 8);
    }

    #[test]
    fn test_network_validation() {
        assert!(SimNet::new(vec![], &[], 1, (0, 1), 0).is_err());
        assert!(SimNet::new(vec!["a".into(), "a".into()], &[], 1, (0, 1), 0).is_err());
        assert!(SimNet::new(vec!["a".into()], &[], 0, (0, 1), 0).is_err());
        assert!(SimNet::new(vec!["a".into()], &[], 1, (5, 1), 0).is_err());
        assert!(SimNet::new(
            vec!["a".into(), "b".into()],
            &[("a".into(), "c".into())],
            1,
            (0, 1),
            0
        )
        .is_err());
        assert!(SimNet::new(vec!["a".into()], &[("a".into(), "a".into())], 1, (0, 1), 0).is_err());
    }

    #[test]
    fn test_scenario_config_roundtrip_and_build() {
        let config = ScenarioConfig {
            nodes: vec!["gw-1".into(), "gw-2".into(), "gw-3".into()],
            stakes: [("gw-1".into(), 2u64), ("gw-2".into(), 1), ("gw-3".into(), 1)]
                .into_iter()
                .collect(),
            topology: Topology::FullMesh,
            fanout: 2,
            latency_ms: (5, 30),
            seed: 7,
            rounds: 20,
        };
        let json = config.to_json();
        let parsed = ScenarioConfig::from_json(&json).unwrap();
        assert_eq!(parsed, config);
        let net = parsed.build_net().unwrap();
        assert_eq!(net.nodes().len(), 3);
        let validators = parsed.validators().unwrap();
        assert_eq!(validators.len(), 3);
        assert_eq!(validators.iter().map(|v| v.stake).sum::<u64>(), 4);

        assert!(ScenarioConfig::from_json("{not json").is_err());
        let mut bad = config.clone();
        bad.stakes.insert("ghost".into(), 1);
        assert!(bad.validators().is_err());
    }

    #[test]
    fn test_edge_topology_builds() {
        let config = ScenarioConfig {
            nodes: vec!["a".into(), "b".into(), "c".into()],
            stakes: BTreeMap::new(),
            topology: Topology::Edges(vec![("a".into(), "b".into()), ("b".into(), "c".into())]),
            fanout: 1,
            latency_ms: (1, 1),
            seed: 0,
            rounds: 1,
        };
        let net = config.build_net().unwrap();
        let report = gossip_broadcast(&net, "a", b"m").unwrap();
        assert_eq!(report.deliveries.len(), 3);
    }
}
