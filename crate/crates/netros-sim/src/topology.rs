//! Compute nodes, network links and the 5G slice that joins them.
//!
//! A topology is a small undirected graph: one robot, plus edge/cloud
//! servers, connected by point-to-point links. A slice reserves a share of
//! each member link's bandwidth for the robot's traffic; an isolated slice
//! is immune to background traffic, a non-isolated one loses effective
//! bandwidth to it.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum effective bandwidth, in mbps. Background traffic on a
/// non-isolated slice can erode a link's share but never reverses it.
pub const BANDWIDTH_FLOOR_MBPS: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComputeNode {
    pub id: String,
    pub cores: u32,
    /// Compute capacity of one core, relative to a robot core (= 1.0).
    pub capacity_per_core: f64,
    pub memory_gb: f64,
    /// Fraction of the node's CPU consumed by always-on system work.
    #[serde(default)]
    pub baseline_load_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkLink {
    pub id: String,
    pub a: String,
    pub b: String,
    pub one_way_latency_ms: f64,
    /// Coefficient of variation of the latency distribution; 0 means the
    /// link always takes exactly `one_way_latency_ms`.
    #[serde(default)]
    pub jitter_cv: f64,
    pub bandwidth_mbps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkSlice {
    pub id: String,
    pub nodes: Vec<String>,
    pub links: Vec<String>,
    /// Fraction of each member link's bandwidth reserved for the slice.
    pub bandwidth_share: f64,
    /// Isolated slices keep their share regardless of background traffic.
    pub isolated: bool,
}

/// Raw topology section of a scenario document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopologySpec {
    pub nodes: Vec<ComputeNode>,
    pub links: Vec<NetworkLink>,
    pub slices: Vec<NetworkSlice>,
    /// Non-slice traffic per link id, in mbps.
    #[serde(default)]
    pub background_traffic_mbps: BTreeMap<String, f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("{kind} id `{id}` declared more than once")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{context} references unknown {kind} `{id}`")]
    DanglingReference {
        context: String,
        kind: &'static str,
        id: String,
    },
    #[error("node `{id}` is not reachable from the robot")]
    DisconnectedGraph { id: String },
    #[error("no path between `{from}` and `{to}`")]
    NoPath { from: String, to: String },
    #[error("link `{link}` is not a member of slice `{slice}`")]
    NotInSlice { link: String, slice: String },
    #[error("unknown slice `{id}`")]
    UnknownSlice { id: String },
    #[error("topology must contain exactly one node with id `robot`")]
    MissingRobot,
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: String, value: f64 },
    #[error("slice `{id}` bandwidth_share must be in (0, 1], got {share}")]
    BadShare { id: String, share: f64 },
}

/// A validated topology with id lookups and an adjacency table.
#[derive(Debug, Clone)]
pub struct Topology {
    pub nodes: Vec<ComputeNode>,
    pub links: Vec<NetworkLink>,
    pub slices: Vec<NetworkSlice>,
    pub background_traffic_mbps: BTreeMap<String, f64>,
    node_ix: BTreeMap<String, usize>,
    link_ix: BTreeMap<String, usize>,
    slice_ix: BTreeMap<String, usize>,
    /// node index -> [(neighbor node index, link index)]
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Validates a raw topology section and builds the lookup structures.
pub fn build_topology(spec: &TopologySpec) -> Result<Topology, TopologyError> {
    let mut node_ix = BTreeMap::new();
    for (i, n) in spec.nodes.iter().enumerate() {
        if node_ix.insert(n.id.clone(), i).is_some() {
            return Err(TopologyError::DuplicateId { kind: "node", id: n.id.clone() });
        }
        if n.cores == 0 {
            return Err(TopologyError::NonPositive {
                what: format!("node `{}` cores", n.id),
                value: 0.0,
            });
        }
        if n.capacity_per_core <= 0.0 {
            return Err(TopologyError::NonPositive {
                what: format!("node `{}` capacity_per_core", n.id),
                value: n.capacity_per_core,
            });
        }
        if n.memory_gb < 0.0 {
            return Err(TopologyError::NonPositive {
                what: format!("node `{}` memory_gb", n.id),
                value: n.memory_gb,
            });
        }
    }
    if !node_ix.contains_key("robot") {
        return Err(TopologyError::MissingRobot);
    }

    let mut link_ix = BTreeMap::new();
    let mut adjacency = vec![Vec::new(); spec.nodes.len()];
    for (i, l) in spec.links.iter().enumerate() {
        if link_ix.insert(l.id.clone(), i).is_some() {
            return Err(TopologyError::DuplicateId { kind: "link", id: l.id.clone() });
        }
        if l.one_way_latency_ms < 0.0 {
            return Err(TopologyError::NonPositive {
                what: format!("link `{}` one_way_latency_ms", l.id),
                value: l.one_way_latency_ms,
            });
        }
        if l.bandwidth_mbps <= 0.0 {
            return Err(TopologyError::NonPositive {
                what: format!("link `{}` bandwidth_mbps", l.id),
                value: l.bandwidth_mbps,
            });
        }
        for end in [&l.a, &l.b] {
            if !node_ix.contains_key(end) {
                return Err(TopologyError::DanglingReference {
                    context: format!("link `{}`", l.id),
                    kind: "node",
                    id: end.clone(),
                });
            }
        }
        let (ai, bi) = (node_ix[&l.a], node_ix[&l.b]);
        adjacency[ai].push((bi, i));
        adjacency[bi].push((ai, i));
    }

    let mut slice_ix = BTreeMap::new();
    for (i, s) in spec.slices.iter().enumerate() {
        if slice_ix.insert(s.id.clone(), i).is_some() {
            return Err(TopologyError::DuplicateId { kind: "slice", id: s.id.clone() });
        }
        if !(s.bandwidth_share > 0.0 && s.bandwidth_share <= 1.0) {
            return Err(TopologyError::BadShare { id: s.id.clone(), share: s.bandwidth_share });
        }
        for n in &s.nodes {
            if !node_ix.contains_key(n) {
                return Err(TopologyError::DanglingReference {
                    context: format!("slice `{}`", s.id),
                    kind: "node",
                    id: n.clone(),
                });
            }
        }
        for l in &s.links {
            if !link_ix.contains_key(l) {
                return Err(TopologyError::DanglingReference {
                    context: format!("slice `{}`", s.id),
                    kind: "link",
                    id: l.clone(),
                });
            }
        }
    }

    for (id, mbps) in &spec.background_traffic_mbps {
        if !link_ix.contains_key(id) {
            return Err(TopologyError::DanglingReference {
                context: "background_traffic_mbps".into(),
                kind: "link",
                id: id.clone(),
            });
        }
        if *mbps < 0.0 {
            return Err(TopologyError::NonPositive {
                what: format!("background traffic on `{id}`"),
                value: *mbps,
            });
        }
    }

    let topo = Topology {
        nodes: spec.nodes.clone(),
        links: spec.links.clone(),
        slices: spec.slices.clone(),
        background_traffic_mbps: spec.background_traffic_mbps.clone(),
        node_ix,
        link_ix,
        slice_ix,
        adjacency,
    };

    // Every node must be reachable from the robot.
    let robot = topo.node_index("robot").unwrap();
    let mut seen = vec![false; topo.nodes.len()];
    let mut queue = VecDeque::from([robot]);
    seen[robot] = true;
    while let Some(n) = queue.pop_front() {
        for &(m, _) in &topo.adjacency[n] {
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(TopologyError::DisconnectedGraph { id: topo.nodes[i].id.clone() });
    }

    Ok(topo)
}

impl Topology {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_ix.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&ComputeNode> {
        self.node_index(id).map(|i| &self.nodes[i])
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_ix.get(id).copied()
    }

    pub fn link(&self, id: &str) -> Option<&NetworkLink> {
        self.link_ix.get(id).map(|&i| &self.links[i])
    }

    pub fn slice(&self, id: &str) -> Option<&NetworkSlice> {
        self.slice_ix.get(id).map(|&i| &self.slices[i])
    }

    /// The link joining two adjacent nodes, if any.
    pub fn link_between(&self, a: &str, b: &str) -> Option<&NetworkLink> {
        let (ai, bi) = (self.node_index(a)?, self.node_index(b)?);
        self.adjacency[ai]
            .iter()
            .find(|&&(n, _)| n == bi)
            .map(|&(_, l)| &self.links[l])
    }
}

/// Shortest path (fewest hops) between two nodes as an ordered list of
/// link ids. The path from a node to itself is empty. Ties between
/// equal-length paths are broken by link declaration order, so the result
/// is deterministic.
pub fn path_between(topo: &Topology, from: &str, to: &str) -> Result<Vec<String>, TopologyError> {
    let fi = topo.node_index(from).ok_or_else(|| TopologyError::DanglingReference {
        context: "path query".into(),
        kind: "node",
        id: from.to_string(),
    })?;
    let ti = topo.node_index(to).ok_or_else(|| TopologyError::DanglingReference {
        context: "path query".into(),
        kind: "node",
        id: to.to_string(),
    })?;
    if fi == ti {
        return Ok(Vec::new());
    }
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; topo.nodes.len()];
    let mut seen = vec![false; topo.nodes.len()];
    let mut queue = VecDeque::from([fi]);
    seen[fi] = true;
    while let Some(n) = queue.pop_front() {
        if n == ti {
            break;
        }
        let mut next: Vec<(usize, usize)> = topo.adjacency[n].clone();
        next.sort_by_key(|&(_, l)| l);
        for (m, l) in next {
            if !seen[m] {
                seen[m] = true;
                prev[m] = Some((n, l));
                queue.push_back(m);
            }
        }
    }
    if !seen[ti] {
        return Err(TopologyError::NoPath { from: from.to_string(), to: to.to_string() });
    }
    let mut path = Vec::new();
    let mut cur = ti;
    while let Some((p, l)) = prev[cur] {
        path.push(topo.links[l].id.clone());
        cur = p;
    }
    path.reverse();
    Ok(path)
}

/// Bandwidth available to slice traffic on a link, in mbps.
///
/// An isolated slice always gets `bandwidth * share`; a non-isolated one
/// loses the link's background traffic from its share, floored at
/// [`BANDWIDTH_FLOOR_MBPS`].
pub fn effective_bandwidth(
    topo: &Topology,
    link_id: &str,
    slice_id: &str,
) -> Result<f64, TopologyError> {
    let slice = topo
        .slice(slice_id)
        .ok_or_else(|| TopologyError::UnknownSlice { id: slice_id.to_string() })?;
    let link = topo.link(link_id).ok_or_else(|| TopologyError::DanglingReference {
        context: "effective_bandwidth".into(),
        kind: "link",
        id: link_id.to_string(),
    })?;
    if !slice.links.iter().any(|l| l == link_id) {
        return Err(TopologyError::NotInSlice {
            link: link_id.to_string(),
            slice: slice_id.to_string(),
        });
    }
    let reserved = link.bandwidth_mbps * slice.bandwidth_share;
    if slice.isolated {
        Ok(reserved)
    } else {
        let background = topo.background_traffic_mbps.get(link_id).copied().unwrap_or(0.0);
        Ok((reserved - background).max(BANDWIDTH_FLOOR_MBPS))
    }
}

/// Bandwidth the scenario's own traffic sees on a link: the effective
/// bandwidth under the first declared slice containing the link, or the
/// raw bandwidth minus background (floored) when no slice covers it.
pub fn carried_bandwidth(topo: &Topology, link_id: &str) -> Result<f64, TopologyError> {
    let link = topo.link(link_id).ok_or_else(|| TopologyError::DanglingReference {
        context: "carried_bandwidth".into(),
        kind: "link",
        id: link_id.to_string(),
    })?;
    for slice in &topo.slices {
        if slice.links.iter().any(|l| l == link_id) {
            return effective_bandwidth(topo, link_id, &slice.id);
        }
    }
    let background = topo.background_traffic_mbps.get(link_id).copied().unwrap_or(0.0);
    Ok((link.bandwidth_mbps - background).max(BANDWIDTH_FLOOR_MBPS))
}

/// Checks that a slice is internally consistent: every member link joins
/// two member nodes, and the member nodes form a connected subgraph.
/// Returns a list of human-readable violations (empty = valid).
pub fn validate_slice(topo: &Topology, slice_id: &str) -> Result<Vec<String>, TopologyError> {
    let slice = topo
        .slice(slice_id)
        .ok_or_else(|| TopologyError::UnknownSlice { id: slice_id.to_string() })?;
    let mut violations = Vec::new();
    for lid in &slice.links {
        let link = topo.link(lid).expect("validated at build time");
        for end in [&link.a, &link.b] {
            if !slice.nodes.contains(end) {
                violations.push(format!(
                    "slice `{}` includes link `{}` but not its endpoint `{}`",
                    slice.id, lid, end
                ));
            }
        }
    }
    // Connectivity over member links only.
    if !slice.nodes.is_empty() {
        let mut seen: BTreeMap<&str, bool> =
            slice.nodes.iter().map(|n| (n.as_str(), false)).collect();
        let mut queue = VecDeque::from([slice.nodes[0].as_str()]);
        seen.insert(slice.nodes[0].as_str(), true);
        while let Some(n) = queue.pop_front() {
            for lid in &slice.links {
                let link = topo.link(lid).expect("validated at build time");
                let other = if link.a == n {
                    Some(link.b.as_str())
                } else if link.b == n {
                    Some(link.a.as_str())
                } else {
                    None
                };
                if let Some(o) = other {
                    if let Some(flag) = seen.get_mut(o) {
                        if !*flag {
                            *flag = true;
                            queue.push_back(o);
                        }
                    }
                }
            }
        }
        for (node, reached) in seen {
            if !reached {
                violations.push(format!(
                    "slice `{}` node `{}` is not connected to the other member nodes",
                    slice.id, node
                ));
            }
        }
    }
    Ok(violations)
}
