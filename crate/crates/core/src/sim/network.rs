//! Random directed networks with target reciprocity and clustering.
//!
//! Starts from a uniform random digraph with the requested number of edges
//! and hill-climbs: each step removes a random edge and adds one that either
//! reciprocates an existing edge, closes an open triad, or is uniformly
//! random. Steps that increase the L1 distance to the targets are reverted.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoevoError, Result};
use crate::ingest::SegmentGraph;

/// Fixed weighted digraph the simulation runs on. Weights are transmission
/// probabilities in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimNetwork {
    pub n_nodes: usize,
    /// Out-edges per node as `(target, weight)`, sorted by target.
    pub out: Vec<Vec<(usize, f64)>>,
    pub reciprocity: f64,
    pub clustering: f64,
    /// The graph is saturated and could not be moved toward the targets.
    pub infeasible: bool,
    pub iterations: u64,
}

impl SimNetwork {
    pub fn n_edges(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.out[a].binary_search_by_key(&b, |&(t, _)| t).is_ok()
    }

    /// Unit-weight view for the structural metrics.
    pub fn to_segment_graph(&self) -> SegmentGraph {
        let names: Vec<String> = (0..self.n_nodes).map(node_name).collect();
        let edges: Vec<(&str, &str, u64)> = self
            .out
            .iter()
            .enumerate()
            .flat_map(|(s, adj)| {
                let names = &names;
                adj.iter()
                    .map(move |&(t, _)| (names[s].as_str(), names[t].as_str(), 1))
            })
            .collect();
        SegmentGraph::from_edges(names.iter().map(String::as_str), edges)
    }
}

/// Node id used in emitted event logs.
pub fn node_name(i: usize) -> String {
    format!("n{i}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureTargets {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub reciprocity: f64,
    pub clustering: f64,
    pub tolerance: f64,
    pub max_iters: u64,
}

/// Directed adjacency with incremental reciprocity and transitivity counts.
struct Builder {
    n: usize,
    dir: Vec<bool>,
    edges: Vec<(usize, usize)>,
    pos: Vec<usize>,
    und_deg: Vec<usize>,
    reciprocated: usize,
    triangles: u64,
    triples: u64,
}

impl Builder {
    fn new(n: usize) -> Self {
        Builder {
            n,
            dir: vec![false; n * n],
            edges: Vec::new(),
            pos: vec![usize::MAX; n * n],
            und_deg: vec![0; n],
            reciprocated: 0,
            triangles: 0,
            triples: 0,
        }
    }

    fn has(&self, u: usize, v: usize) -> bool {
        self.dir[u * self.n + v]
    }

    fn linked(&self, u: usize, v: usize) -> bool {
        self.has(u, v) || self.has(v, u)
    }

    fn common_neighbors(&self, u: usize, v: usize) -> u64 {
        (0..self.n)
            .filter(|&w| w != u && w != v && self.linked(u, w) && self.linked(v, w))
            .count() as u64
    }

    fn add(&mut self, u: usize, v: usize) {
        debug_assert!(u != v && !self.has(u, v));
        if !self.has(v, u) {
            // new undirected link
            self.triangles += self.common_neighbors(u, v);
            self.triples += (self.und_deg[u] + self.und_deg[v]) as u64;
            self.und_deg[u] += 1;
            self.und_deg[v] += 1;
        } else {
            self.reciprocated += 2;
        }
        self.dir[u * self.n + v] = true;
        self.pos[u * self.n + v] = self.edges.len();
        self.edges.push((u, v));
    }

    fn remove(&mut self, u: usize, v: usize) {
        debug_assert!(self.has(u, v));
        let idx = self.pos[u * self.n + v];
        self.edges.swap_remove(idx);
        if idx < self.edges.len() {
            let (a, b) = self.edges[idx];
            self.pos[a * self.n + b] = idx;
        }
        self.dir[u * self.n + v] = false;
        self.pos[u * self.n + v] = usize::MAX;
        if !self.has(v, u) {
            self.und_deg[u] -= 1;
            self.und_deg[v] -= 1;
            self.triples -= (self.und_deg[u] + self.und_deg[v]) as u64;
            self.triangles -= self.common_neighbors(u, v);
        } else {
            self.reciprocated -= 2;
        }
    }

    fn reciprocity(&self) -> f64 {
        if self.edges.is_empty() {
            0.0
        } else {
            self.reciprocated as f64 / self.edges.len() as f64
        }
    }

    fn clustering(&self) -> f64 {
        if self.triples == 0 {
            0.0
        } else {
            3.0 * self.triangles as f64 / self.triples as f64
        }
    }

    fn random_absent<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        loop {
            let u = rng.random_range(0..self.n);
            let v = rng.random_range(0..self.n);
            if u != v && !self.has(u, v) {
                return (u, v);
            }
        }
    }

    fn reciprocating<R: Rng>(&self, rng: &mut R) -> Option<(usize, usize)> {
        for _ in 0..64 {
            let &(u, v) = self.edges.choose(rng)?;
            if !self.has(v, u) {
                return Some((v, u));
            }
        }
        None
    }

    fn triangle_closing<R: Rng>(&self, rng: &mut R) -> Option<(usize, usize)> {
        for _ in 0..64 {
            let u = rng.random_range(0..self.n);
            if self.und_deg[u] < 2 {
                continue;
            }
            let nb: Vec<usize> = (0..self.n).filter(|&w| self.linked(u, w)).collect();
            let v = *nb.choose(rng)?;
            let w = *nb.choose(rng)?;
            if v != w && !self.linked(v, w) {
                return Some(if rng.random_bool(0.5) { (v, w) } else { (w, v) });
            }
        }
        None
    }
}

fn distance(b: &Builder, t: &StructureTargets) -> f64 {
    (b.reciprocity() - t.reciprocity).abs() + (b.clustering() - t.clustering).abs()
}

fn within(b: &Builder, t: &StructureTargets) -> bool {
    (b.reciprocity() - t.reciprocity).abs() <= t.tolerance
        && (b.clustering() - t.clustering).abs() <= t.tolerance
}

pub fn validate_targets(t: &StructureTargets) -> Result<()> {
    if t.n_nodes < 2 {
        return Err(CoevoError::config("network needs at least 2 nodes"));
    }
    if t.n_edges > t.n_nodes * (t.n_nodes - 1) {
        return Err(CoevoError::config(format!(
            "{} edges do not fit in a simple digraph on {} nodes",
            t.n_edges, t.n_nodes
        )));
    }
    for (name, v) in [("reciprocity", t.reciprocity), ("clustering", t.clustering)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CoevoError::config(format!("target {name} {v} outside [0, 1]")));
        }
    }
    if !(t.tolerance >= 0.0) {
        return Err(CoevoError::config("structure tolerance must be non-negative"));
    }
    Ok(())
}

/// Generates the network. Weights are drawn after the structure is fixed,
/// from the same generator.
pub fn generate_network<R: Rng>(targets: &StructureTargets, rng: &mut R) -> Result<SimNetwork> {
    validate_targets(targets)?;
    let n = targets.n_nodes;
    let mut b = Builder::new(n);
    let saturated = targets.n_edges == n * (n - 1);
    if saturated {
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    b.add(u, v);
                }
            }
        }
    } else {
        while b.edges.len() < targets.n_edges {
            let (u, v) = b.random_absent(rng);
            b.add(u, v);
        }
    }

    let mut iterations = 0u64;
    let infeasible = saturated && !within(&b, targets);
    if !saturated && targets.n_edges > 0 {
        let mut best = (distance(&b, targets), b.reciprocity(), b.clustering());
        while !within(&b, targets) {
            if iterations >= targets.max_iters {
                return Err(CoevoError::StructureUnreachable {
                    iterations,
                    best_reciprocity: best.1,
                    best_clustering: best.2,
                });
            }
            iterations += 1;
            let before = distance(&b, targets);
            let proposal = match rng.random_range(0..3) {
                0 => b.reciprocating(rng),
                1 => b.triangle_closing(rng),
                _ => Some(b.random_absent(rng)),
            };
            let Some(add) = proposal else { continue };
            let &removed = b.edges.choose(rng).expect("graph has edges");
            if removed == add {
                continue;
            }
            b.remove(removed.0, removed.1);
            if b.has(add.0, add.1) {
                b.add(removed.0, removed.1);
                continue;
            }
            b.add(add.0, add.1);
            let after = distance(&b, targets);
            if after > before {
                b.remove(add.0, add.1);
                b.add(removed.0, removed.1);
            } else if after < best.0 {
                best = (after, b.reciprocity(), b.clustering());
            }
        }
    }

    let mut edges = b.edges.clone();
    edges.sort_unstable();
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (u, v) in edges {
        out[u].push((v, rng.random::<f64>()));
    }
    Ok(SimNetwork {
        n_nodes: n,
        out,
        reciprocity: b.reciprocity(),
        clustering: b.clustering(),
        infeasible,
        iterations,
    })
}
