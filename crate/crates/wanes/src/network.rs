//! Road network, OD demands, and enumerated path sets.
//!
//! The network is immutable after construction. Path sets are built once
//! with Yen's K-shortest loopless paths under free-flow travel time, and the
//! edge-path incidence map is kept implicitly as the per-path edge lists, so
//! `q = incidence * mu` is a single pass over the paths.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Directed road segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

/// Origin-destination pair with its traffic demand (flow units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
}

/// A simple directed path, stored as an edge-id sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub od: usize,
    pub edges: Vec<usize>,
}

/// Immutable network: graph, demands, and per-OD path sets.
///
/// Path indices of distinct OD pairs occupy disjoint contiguous ranges;
/// `od_path_start[w]..od_path_start[w+1]` is the range of pair `w`.
#[derive(Debug, Clone)]
pub struct TrafficNetwork {
    num_nodes: usize,
    edges: Vec<Edge>,
    od_pairs: Vec<OdPair>,
    paths: Vec<Path>,
    od_path_start: Vec<usize>,
    out_edges: Vec<Vec<usize>>,
}

impl TrafficNetwork {
    /// Builds the network and enumerates up to `k_paths` shortest loopless
    /// paths per OD pair under the given free-flow edge times.
    ///
    /// Zero-demand OD pairs are dropped with a warning; an OD pair with no
    /// directed path is an error.
    pub fn build(
        num_nodes: usize,
        edges: Vec<Edge>,
        free_flow_times: &[f64],
        od_pairs: Vec<OdPair>,
        k_paths: usize,
    ) -> Result<Self> {
        if k_paths == 0 {
            return Err(Error::InvalidConfig("k_paths must be at least 1".into()));
        }
        if free_flow_times.len() != edges.len() {
            return Err(Error::DimensionMismatch {
                what: "free-flow times vs edges",
                expected: edges.len(),
                got: free_flow_times.len(),
            });
        }
        for (e, edge) in edges.iter().enumerate() {
            if edge.tail == edge.head {
                return Err(Error::InvalidConfig(format!(
                    "edge {e} is a self-loop at node {}",
                    edge.tail
                )));
            }
            if edge.tail >= num_nodes || edge.head >= num_nodes {
                return Err(Error::InvalidConfig(format!(
                    "edge {e} references a node outside 0..{num_nodes}"
                )));
            }
        }

        let mut kept = Vec::with_capacity(od_pairs.len());
        for od in od_pairs {
            if od.demand < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "negative demand {} for OD ({}, {})",
                    od.demand, od.origin, od.destination
                )));
            }
            if od.demand == 0.0 {
                log::warn!(
                    "dropping zero-demand OD pair ({}, {})",
                    od.origin,
                    od.destination
                );
                continue;
            }
            if od.origin == od.destination {
                return Err(Error::NoPath {
                    origin: od.origin,
                    destination: od.destination,
                });
            }
            kept.push(od);
        }
        if kept.is_empty() {
            return Err(Error::EmptyInput("no OD pair with positive demand"));
        }

        let out_edges = adjacency(num_nodes, &edges);
        let mut paths = Vec::new();
        let mut od_path_start = vec![0usize];
        for (w, od) in kept.iter().enumerate() {
            let found = k_shortest_paths(
                &out_edges,
                &edges,
                free_flow_times,
                od.origin,
                od.destination,
                k_paths,
            );
            if found.is_empty() {
                return Err(Error::NoPath {
                    origin: od.origin,
                    destination: od.destination,
                });
            }
            paths.extend(found.into_iter().map(|(_, e)| Path { od: w, edges: e }));
            od_path_start.push(paths.len());
        }

        Ok(Self {
            num_nodes,
            edges,
            od_pairs: kept,
            paths,
            od_path_start,
            out_edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn od_pairs(&self) -> &[OdPair] {
        &self.od_pairs
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    /// Path index range of OD pair `w`.
    pub fn od_paths(&self, w: usize) -> std::ops::Range<usize> {
        self.od_path_start[w]..self.od_path_start[w + 1]
    }

    /// Total demand over all OD pairs.
    pub fn total_demand(&self) -> f64 {
        self.od_pairs.iter().map(|od| od.demand).sum()
    }

    /// Largest single-pair demand.
    pub fn max_demand(&self) -> f64 {
        self.od_pairs.iter().map(|od| od.demand).fold(0.0, f64::max)
    }

    /// Largest per-OD path-set size.
    pub fn max_paths_per_od(&self) -> usize {
        (0..self.od_pairs.len())
            .map(|w| self.od_paths(w).len())
            .max()
            .unwrap_or(0)
    }

    /// Edge flow `q` induced by a path flow: `q[e] = sum over paths through e`.
    pub fn edge_flow(&self, mu: &PathFlow) -> Result<Vec<f64>> {
        if mu.values.len() != self.paths.len() {
            return Err(Error::DimensionMismatch {
                what: "path flow vs path set",
                expected: self.paths.len(),
                got: mu.values.len(),
            });
        }
        let mut q = vec![0.0; self.edges.len()];
        for (p, path) in self.paths.iter().enumerate() {
            let v = mu.values[p];
            for &e in &path.edges {
                q[e] += v;
            }
        }
        Ok(q)
    }

    /// Minimal-cost directed path for one OD pair under arbitrary
    /// nonnegative edge costs. Ties are broken towards the lexicographically
    /// smallest node sequence.
    pub fn shortest_path(&self, edge_costs: &[f64], od: &OdPair) -> Result<(Vec<usize>, f64)> {
        if edge_costs.len() != self.edges.len() {
            return Err(Error::DimensionMismatch {
                what: "edge costs vs edges",
                expected: self.edges.len(),
                got: edge_costs.len(),
            });
        }
        if let Some(c) = edge_costs.iter().find(|c| **c < 0.0 || !c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "edge costs must be finite and nonnegative, got {c}"
            )));
        }
        shortest_path_lex(
            &self.out_edges,
            &self.edges,
            edge_costs,
            self.num_nodes,
            od.origin,
            od.destination,
        )
    }

    /// The edge-path incidence entry: 1 iff edge `e` lies on path `p`.
    pub fn incidence(&self, e: usize, p: usize) -> u8 {
        u8::from(self.paths[p].edges.contains(&e))
    }
}

/// Nonnegative per-path flow vector on the product of demand-scaled
/// simplices.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFlow {
    values: Vec<f64>,
}

impl PathFlow {
    /// Wraps a value vector after checking membership in the demand polytope
    /// (entries nonnegative, per-OD sums equal to the demands).
    pub fn new(network: &TrafficNetwork, values: Vec<f64>) -> Result<Self> {
        let flow = Self { values };
        flow.check_in_polytope(network)?;
        Ok(flow)
    }

    /// Wraps values produced by an operation that preserves the polytope by
    /// construction.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Wraps a nonnegative vector without demanding polytope membership.
    /// The potential and latency maps extend to any nonnegative path
    /// vector; gradient probes and solver internals use that freedom.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some((p, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NotInPolytope(format!("values[{p}] = {v} < 0")));
        }
        Ok(Self { values })
    }

    /// Per-OD uniform flow: every path of pair `w` carries `m_w / |P_w|`.
    pub fn uniform(network: &TrafficNetwork) -> Self {
        let mut values = vec![0.0; network.num_paths()];
        for (w, od) in network.od_pairs().iter().enumerate() {
            let range = network.od_paths(w);
            let share = od.demand / range.len() as f64;
            for v in &mut values[range] {
                *v = share;
            }
        }
        Self { values }
    }

    /// Random flow: per OD, a symmetric Dirichlet(alpha) point scaled by the
    /// demand.
    pub fn dirichlet<R: Rng + ?Sized>(network: &TrafficNetwork, alpha: f64, rng: &mut R) -> Self {
        let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
        let mut values = vec![0.0; network.num_paths()];
        for (w, od) in network.od_pairs().iter().enumerate() {
            let range = network.od_paths(w);
            loop {
                let draws: Vec<f64> = range.clone().map(|_| gamma.sample(rng)).collect();
                let total: f64 = draws.iter().sum();
                if total > 0.0 {
                    for (slot, d) in values[range.clone()].iter_mut().zip(&draws) {
                        *slot = od.demand * d / total;
                    }
                    break;
                }
            }
        }
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared Euclidean distance to another flow.
    pub fn squared_distance(&self, other: &PathFlow) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn check_in_polytope(&self, network: &TrafficNetwork) -> Result<()> {
        if self.values.len() != network.num_paths() {
            return Err(Error::DimensionMismatch {
                what: "path flow vs path set",
                expected: network.num_paths(),
                got: self.values.len(),
            });
        }
        for (p, &v) in self.values.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(Error::NotInPolytope(format!("values[{p}] = {v} < 0")));
            }
        }
        for (w, od) in network.od_pairs().iter().enumerate() {
            let mass: f64 = self.values[network.od_paths(w)].iter().sum();
            let tol = 1e-9 * od.demand.max(1.0);
            if (mass - od.demand).abs() > tol {
                return Err(Error::NotInPolytope(format!(
                    "OD {w} carries mass {mass}, demand is {}",
                    od.demand
                )));
            }
        }
        Ok(())
    }
}

fn adjacency(num_nodes: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_nodes];
    for (e, edge) in edges.iter().enumerate() {
        out[edge.tail].push(e);
    }
    out
}

/// Plain Dijkstra returning the tree-deterministic shortest path as an edge
/// sequence, honoring banned nodes/edges. Used by the Yen spur searches.
fn dijkstra(
    out_edges: &[Vec<usize>],
    edges: &[Edge],
    costs: &[f64],
    source: usize,
    target: usize,
    banned_nodes: &[bool],
    banned_edges: &HashSet<usize>,
) -> Option<(f64, Vec<usize>)> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = out_edges.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((OrderedF64(0.0), source)));
    while let Some(Reverse((OrderedF64(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == target {
            break;
        }
        for &e in &out_edges[u] {
            if banned_edges.contains(&e) {
                continue;
            }
            let v = edges[e].head;
            if banned_nodes[v] {
                continue;
            }
            let nd = d + costs[e];
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(e);
                heap.push(Reverse((OrderedF64(nd), v)));
            }
        }
    }
    if !dist[target].is_finite() {
        return None;
    }
    let mut path = Vec::new();
    let mut node = target;
    while node != source {
        let e = pred[node]?;
        path.push(e);
        node = edges[e].tail;
    }
    path.reverse();
    Some((path.iter().map(|&e| costs[e]).sum(), path))
}

/// Shortest path with the lexicographic-node tie rule: among all
/// minimum-cost paths, the node sequence is lexicographically smallest.
///
/// Uses forward and reverse distance labels and then walks greedily from the
/// origin, always taking the smallest-head edge that stays on a shortest
/// path.
fn shortest_path_lex(
    out_edges: &[Vec<usize>],
    edges: &[Edge],
    costs: &[f64],
    num_nodes: usize,
    origin: usize,
    destination: usize,
) -> Result<(Vec<usize>, f64)> {
    let no_ban_nodes = vec![false; num_nodes];
    let no_ban_edges = HashSet::new();
    let forward = dijkstra(
        out_edges,
        edges,
        costs,
        origin,
        destination,
        &no_ban_nodes,
        &no_ban_edges,
    );
    if forward.is_none() {
        return Err(Error::Unreachable {
            origin,
            destination,
        });
    }

    // Reverse graph distances to the destination.
    let rev_edges: Vec<Edge> = edges
        .iter()
        .map(|e| Edge {
            tail: e.head,
            head: e.tail,
        })
        .collect();
    let rev_adj = adjacency(num_nodes, &rev_edges);
    let mut dist_to = vec![f64::INFINITY; num_nodes];
    {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let mut heap = BinaryHeap::new();
        dist_to[destination] = 0.0;
        heap.push(Reverse((OrderedF64(0.0), destination)));
        while let Some(Reverse((OrderedF64(d), u))) = heap.pop() {
            if d > dist_to[u] {
                continue;
            }
            for &e in &rev_adj[u] {
                let v = rev_edges[e].head;
                let nd = d + costs[e];
                if nd < dist_to[v] {
                    dist_to[v] = nd;
                    heap.push(Reverse((OrderedF64(nd), v)));
                }
            }
        }
    }

    let mut path = Vec::new();
    let mut node = origin;
    let mut acc = 0.0;
    while node != destination {
        // Score every out-edge by the total it would commit to; keep the
        // exact minimum, then the smallest head node among the minimizers.
        let mut best: Option<(f64, usize, usize)> = None;
        for &e in &out_edges[node] {
            let head = edges[e].head;
            if !dist_to[head].is_finite() {
                continue;
            }
            let total = acc + costs[e] + dist_to[head];
            let better = match best {
                None => true,
                Some((bt, bh, _)) => total < bt || (total == bt && head < bh),
            };
            if better {
                best = Some((total, head, e));
            }
        }
        let (_, head, e) = best.ok_or(Error::Unreachable {
            origin,
            destination,
        })?;
        acc += costs[e];
        path.push(e);
        node = head;
        if path.len() > num_nodes {
            // Cannot happen on consistent labels; guards float pathologies.
            return Err(Error::Unreachable {
                origin,
                destination,
            });
        }
    }
    Ok((path, acc))
}

/// Yen's K-shortest loopless paths, ordered by (cost, edge sequence).
///
/// Deterministic: candidate ties are resolved by the lexicographic edge-id
/// order, so the result for K is a prefix of the result for K+1.
pub fn k_shortest_paths(
    out_edges: &[Vec<usize>],
    edges: &[Edge],
    costs: &[f64],
    origin: usize,
    destination: usize,
    k: usize,
) -> Vec<(f64, Vec<usize>)> {
    let num_nodes = out_edges.len();
    let no_ban_nodes = vec![false; num_nodes];
    let no_ban_edges = HashSet::new();
    let Some(first) = dijkstra(
        out_edges,
        edges,
        costs,
        origin,
        destination,
        &no_ban_nodes,
        &no_ban_edges,
    ) else {
        return Vec::new();
    };

    let mut accepted: Vec<(f64, Vec<usize>)> = vec![first];
    let mut candidates: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = accepted.iter().map(|(_, p)| p.clone()).collect();

    while accepted.len() < k {
        let prev = accepted.last().unwrap().1.clone();
        for spur_idx in 0..prev.len() {
            let root = &prev[..spur_idx];
            let spur_node = edges[prev[spur_idx]].tail;

            let mut banned_edges = HashSet::new();
            for (_, p) in &accepted {
                if p.len() > spur_idx && p[..spur_idx] == *root {
                    banned_edges.insert(p[spur_idx]);
                }
            }
            let mut banned_nodes = vec![false; num_nodes];
            let mut node = origin;
            for &e in root {
                banned_nodes[node] = true;
                node = edges[e].head;
            }

            if let Some((_, spur)) = dijkstra(
                out_edges,
                edges,
                costs,
                spur_node,
                destination,
                &banned_nodes,
                &banned_edges,
            ) {
                let mut full = root.to_vec();
                full.extend(spur);
                if seen.insert(full.clone()) {
                    let cost = full.iter().map(|&e| costs[e]).sum();
                    candidates.push((cost, full));
                }
            }
        }
        // Smallest candidate by (cost, lexicographic edge sequence).
        let Some(best_idx) = candidates
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
            .map(|(i, _)| i)
        else {
            break;
        };
        accepted.push(candidates.swap_remove(best_idx));
    }
    accepted
}

/// Total-order wrapper so f64 keys can drive the binary heaps.
#[derive(PartialEq, Copy, Clone, Debug)]
struct OrderedF64(f64);

impl Eq for OrderedF64 {}

impl PartialOrd for OrderedF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
