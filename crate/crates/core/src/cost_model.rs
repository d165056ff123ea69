//! Control-overhead cost formulas for expanding-ring discovery, scoped
//! periodic link-state updates and MPR-relayed topology control.
//!
//! Costs are expressed in expected transmissions. Continuous-time
//! integrals over an evaluation horizon are evaluated as sums over the
//! periodic update instants `k * interval <= horizon`.

use std::collections::VecDeque;

use serde::Deserialize;

use crate::error::{domain, Result};

pub use crate::NodeId;

/// Undirected simple graph over dense node ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSnapshot {
    n: usize,
    adjacency: Vec<Vec<NodeId>>,
}

impl GraphSnapshot {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return domain(format!("edge ({u}, {v}) references a node outside 0..{n}"));
            }
            if u == v {
                return domain(format!("self-loop on node {u}"));
            }
            if !adjacency[u].contains(&v) {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self { n, adjacency })
    }

    /// Parses a whitespace-separated `u v` edge list. Blank lines and lines
    /// starting with `#` are skipped. The node count is one past the
    /// largest id seen.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_id = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<NodeId> {
                tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                    crate::Error::Domain(format!("line {}: expected `u v`", lineno + 1))
                })
            };
            let u = parse(parts.next())?;
            let v = parse(parts.next())?;
            if parts.next().is_some() {
                return domain(format!("line {}: trailing tokens", lineno + 1));
            }
            max_id = Some(max_id.unwrap_or(0).max(u).max(v));
            edges.push((u, v));
        }
        Self::new(max_id.map_or(0, |m| m + 1), edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    /// Hop distances from `src`; `None` for unreachable nodes.
    pub fn hop_distances(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node < self.n {
            Ok(())
        } else {
            domain(format!("node {node} is not in a graph of {} nodes", self.n))
        }
    }
}

/// TTL radii of an expanding-ring search, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DsrErsSchedule {
    rings: Vec<u32>,
}

pub const MAX_TTL: u32 = 255;

impl DsrErsSchedule {
    pub fn new(rings: Vec<u32>) -> Result<Self> {
        if rings.is_empty() {
            return domain("ring schedule is empty");
        }
        if rings[0] == 0 {
            return domain("ring TTLs must be >= 1");
        }
        if rings.windows(2).any(|w| w[0] >= w[1]) {
            return domain(format!("ring TTLs must be strictly increasing: {rings:?}"));
        }
        if *rings.last().unwrap() > MAX_TTL {
            return domain(format!("ring TTL exceeds {MAX_TTL}"));
        }
        Ok(Self { rings })
    }

    /// The two-stage schedule: a non-propagating ring, then a full flood.
    pub fn two_stage(non_propagating_ttl: u32) -> Result<Self> {
        if non_propagating_ttl >= MAX_TTL {
            return Self::new(vec![MAX_TTL]);
        }
        Self::new(vec![non_propagating_ttl, MAX_TTL])
    }

    pub fn rings(&self) -> &[u32] {
        &self.rings
    }
}

/// Broadcasts of one TTL-limited flood from `src`: the source plus every
/// node strictly inside the ring rebroadcasts once.
pub fn ring_cost(graph: &GraphSnapshot, src: NodeId, ttl: u32) -> Result<u64> {
    graph.check_node(src)?;
    if ttl == 0 {
        return domain("ttl must be >= 1");
    }
    let inside = graph
        .hop_distances(src)
        .into_iter()
        .flatten()
        .filter(|&d| d >= 1 && d < ttl)
        .count();
    Ok(1 + inside as u64)
}

/// Which branch of the piecewise discovery cost applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscoveryCase {
    /// No reply: every ring of the schedule is flooded.
    NoReply,
    /// Reply in a first ring of TTL 1: only that ring is paid.
    FirstRingTtlOne,
    /// Reply in ring `index`: rings `0..=index` are paid.
    ReplyAt(usize),
}

pub fn discovery_case(schedule: &DsrErsSchedule, rrep_ring: Option<usize>) -> Result<DiscoveryCase> {
    match rrep_ring {
        None => Ok(DiscoveryCase::NoReply),
        Some(i) if i >= schedule.rings.len() => {
            domain(format!("ring index {i} outside schedule of {}", schedule.rings.len()))
        }
        Some(0) if schedule.rings[0] == 1 => Ok(DiscoveryCase::FirstRingTtlOne),
        Some(i) => Ok(DiscoveryCase::ReplyAt(i)),
    }
}

/// Route discovery cost over an expanding-ring schedule.
pub fn dsr_discovery_cost(
    graph: &GraphSnapshot,
    src: NodeId,
    schedule: &DsrErsSchedule,
    rrep_ring: Option<usize>,
) -> Result<u64> {
    let paid = match discovery_case(schedule, rrep_ring)? {
        DiscoveryCase::NoReply => schedule.rings.as_slice(),
        DiscoveryCase::FirstRingTtlOne => &schedule.rings[..1],
        DiscoveryCase::ReplyAt(i) => &schedule.rings[..=i],
    };
    paid.iter().map(|&ttl| ring_cost(graph, src, ttl)).sum()
}

/// Inputs of the scoped and MPR cost formulas.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopedCostParams {
    pub d_avg_in: f64,
    pub d_avg_out: f64,
    pub n_in: u32,
    pub n_out: u32,
    pub p_err: f64,
    /// Forwarding degree per hop; index 0 is hop 1.
    pub d_f: Vec<f64>,
    #[serde(default)]
    pub d_f_mpr: Vec<f64>,
    #[serde(default)]
    pub p_c_mpr: f64,
    /// Network diameter in hops.
    pub h: u32,
    /// Evaluation window, seconds.
    pub horizon: f64,
    pub intervals: UpdateIntervals,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateIntervals {
    pub intra: f64,
    pub inter: f64,
    pub hello: f64,
    pub tc: f64,
}

impl ScopedCostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_err", self.p_err), ("p_c_mpr", self.p_c_mpr)] {
            if !(0.0..=1.0).contains(&p) {
                return domain(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.n_in == 0 || self.n_out == 0 || self.h == 0 {
            return domain("hop counts must be >= 1");
        }
        let iv = &self.intervals;
        if [iv.intra, iv.inter, iv.hello, iv.tc].iter().any(|&t| !(t > 0.0)) {
            return domain("update intervals must be > 0");
        }
        if !(self.horizon >= 0.0) {
            return domain("horizon must be >= 0");
        }
        if self.d_f.iter().chain(&self.d_f_mpr).any(|&d| !(d >= 0.0)) {
            return domain("forwarding degrees must be >= 0");
        }
        Ok(())
    }
}

/// `sum_{i=1}^{hops-1} p_err^(i+1) * prod_{j=1}^{i} d_f[j]`
fn forwarding_series(p_err: f64, d_f: &[f64], hops: u32, label: &str) -> Result<f64> {
    let terms = hops.saturating_sub(1) as usize;
    if d_f.len() < terms {
        return domain(format!(
            "{label} needs {terms} forwarding-degree entries, got {}",
            d_f.len()
        ));
    }
    let mut sum = 0.0;
    let mut product = 1.0;
    let mut p_pow = p_err;
    for &degree in &d_f[..terms] {
        product *= degree;
        p_pow *= p_err;
        sum += p_pow * product;
    }
    Ok(sum)
}

/// Number of periodic instants `k * interval` in `(0, horizon]`.
pub fn update_instants(horizon: f64, interval: f64) -> u64 {
    // Small slack so exact multiples survive floating division.
    (horizon / interval + 1e-9).floor().max(0.0) as u64
}

/// Scoped link-state update cost over the horizon.
pub fn fsr_cost(params: &ScopedCostParams) -> Result<f64> {
    params.validate()?;
    let needed = params.n_in.max(params.n_out).saturating_sub(1) as usize;
    if params.d_f.len() < needed {
        return domain(format!(
            "d_f needs {needed} entries for scopes ({}, {}), got {}",
            params.n_in,
            params.n_out,
            params.d_f.len()
        ));
    }
    let outer = params.d_avg_out * forwarding_series(params.p_err, &params.d_f, params.n_out, "d_f")?;
    let inner = params.d_avg_in * forwarding_series(params.p_err, &params.d_f, params.n_in, "d_f")?;
    let outer_updates = update_instants(params.horizon, params.intervals.inter) as f64;
    let inner_updates = update_instants(params.horizon, params.intervals.intra) as f64;
    Ok(outer_updates * outer + inner_updates * inner)
}

/// Per-update MPR costs `(unchanged-MPR, changed-MPR)`.
pub fn olsr_update_cost(params: &ScopedCostParams) -> Result<(f64, f64)> {
    params.validate()?;
    let d_avg = params.d_avg_out;
    let lead = params.p_err * d_avg;
    let c_nc = (1.0 - params.p_c_mpr) * lead
        + d_avg * forwarding_series(params.p_err, &params.d_f_mpr, params.h, "d_f_mpr")?;
    let c_c = params.p_c_mpr * lead
        + d_avg * forwarding_series(params.p_err, &params.d_f, params.h, "d_f")?;
    Ok((c_nc, c_c))
}

/// Total MPR update cost over the TC instants within the horizon.
pub fn olsr_total_cost(params: &ScopedCostParams) -> Result<f64> {
    let (c_nc, c_c) = olsr_update_cost(params)?;
    Ok(update_instants(params.horizon, params.intervals.tc) as f64 * (c_nc + c_c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub d_avg: f64,
    pub diameter: u32,
    /// Forwarding degree per hop; index 0 is hop 1 (ratio of hop-2 to hop-1 populations).
    pub d_f: Vec<f64>,
    /// False when the graph is disconnected and stats cover the largest component.
    pub connected: bool,
}

/// Mean degree, diameter and per-hop forwarding degrees of a snapshot.
///
/// When `src` is given, forwarding degrees are taken from that source's BFS
/// only; otherwise they are averaged over every source.
pub fn graph_stats(graph: &GraphSnapshot, src: Option<NodeId>) -> Result<GraphStats> {
    if graph.n == 0 {
        return domain("graph has no nodes");
    }
    if let Some(s) = src {
        graph.check_node(s)?;
    }

    let component = largest_component(graph);
    let connected = component.len() == graph.n;
    if !connected {
        log::warn!(
            "graph is disconnected; stats use the largest component ({} of {} nodes)",
            component.len(),
            graph.n
        );
    }
    let in_component = {
        let mut mask = vec![false; graph.n];
        component.iter().for_each(|&v| mask[v] = true);
        mask
    };
    let degree_sum: usize = component.iter().map(|&v| graph.adjacency[v].len()).sum();
    let d_avg = degree_sum as f64 / component.len() as f64;

    let mut diameter = 0;
    let mut layers = Vec::with_capacity(component.len());
    for &s in &component {
        let dist = graph.hop_distances(s);
        let ecc = dist.iter().flatten().copied().max().unwrap_or(0);
        diameter = diameter.max(ecc);
        let mut counts = vec![0usize; ecc as usize + 1];
        for d in dist.iter().flatten() {
            counts[*d as usize] += 1;
        }
        layers.push((s, counts));
    }

    let sources: Vec<&Vec<usize>> = match src {
        Some(s) if in_component[s] => layers.iter().filter(|(v, _)| *v == s).map(|(_, c)| c).collect(),
        Some(_) => Vec::new(),
        None => layers.iter().map(|(_, c)| c).collect(),
    };
    let hops = diameter.saturating_sub(1) as usize;
    let mut d_f = vec![0.0; hops];
    if !sources.is_empty() {
        for counts in &sources {
            for (j, slot) in d_f.iter_mut().enumerate() {
                let here = counts.get(j + 1).copied().unwrap_or(0);
                let next = counts.get(j + 2).copied().unwrap_or(0);
                *slot += next as f64 / here.max(1) as f64;
            }
        }
        d_f.iter_mut().for_each(|x| *x /= sources.len() as f64);
    }

    Ok(GraphStats {
        d_avg,
        diameter,
        d_f,
        connected,
    })
}

fn largest_component(graph: &GraphSnapshot) -> Vec<NodeId> {
    let mut seen = vec![false; graph.n];
    let mut best = Vec::new();
    for start in 0..graph.n {
        if seen[start] {
            continue;
        }
        let members: Vec<NodeId> = graph
            .hop_distances(start)
            .iter()
            .enumerate()
            .filter_map(|(v, d)| d.map(|_| v))
            .collect();
        members.iter().for_each(|&v| seen[v] = true);
        if members.len() > best.len() {
            best = members;
        }
    }
    best
}
