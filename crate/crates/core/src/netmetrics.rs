//! Structural metrics of segment graphs.
//!
//! Within a segment: size, reciprocity, transitivity, degree inequality,
//! degree assortativity, component sizes and cycle-free effective
//! conductance. Across consecutive segments: edge Jaccard, expectedness
//! (past conductance between the endpoints of present edges) and the
//! edge-repeat curve.
//!
//! Conductance uses transition probabilities `w(k,l) / W(k)` where `W(k)` is
//! the weighted out-degree of `k`, so every path product is a probability.
//! Paths are simple, at most `max_path_len` edges long, and a branch is cut
//! as soon as its running product drops below `prune_epsilon`.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoevoError, Result};
use crate::ingest::SegmentGraph;
use crate::series::{Flagged, MetricSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductanceConfig {
    pub max_path_len: usize,
    pub prune_epsilon: f64,
}

impl Default for ConductanceConfig {
    fn default() -> Self {
        ConductanceConfig {
            max_path_len: 4,
            prune_epsilon: 1e-9,
        }
    }
}

impl ConductanceConfig {
    pub fn new(max_path_len: usize, prune_epsilon: f64) -> Result<Self> {
        let cfg = ConductanceConfig {
            max_path_len,
            prune_epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_path_len < 1 {
            return Err(CoevoError::config("max path length must be at least 1"));
        }
        if !(self.prune_epsilon > 0.0) {
            return Err(CoevoError::config("prune epsilon must be positive"));
        }
        Ok(())
    }

    /// Every simple path, no pruning. Exponential; meant for small graphs.
    pub fn exhaustive() -> Self {
        ConductanceConfig {
            max_path_len: usize::MAX,
            prune_epsilon: 0.0,
        }
    }
}

/// Single-segment structural metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StructuralMetrics {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub reciprocity: f64,
    pub clustering: f64,
    pub centralization: f64,
    pub degree_assortativity: f64,
    pub mean_degree: f64,
    pub sd_degree: f64,
    pub lscc_size: usize,
    pub lwcc_size: usize,
    /// Graph has no nodes; every field is zero.
    pub empty: bool,
    /// Degree variance across edge ends is zero (or there are no edges).
    pub assortativity_degenerate: bool,
}

/// One row of the structural table: single-segment metrics plus the
/// cross-segment ones, which are missing for the first segment.
#[derive(Debug, Clone, PartialEq)]
pub struct NetMetricRow {
    pub structural: StructuralMetrics,
    pub conductance: f64,
    pub edge_jaccard: Option<f64>,
    pub expectedness: Option<f64>,
}

pub const NET_COLUMNS: [&str; 13] = [
    "n_nodes",
    "n_edges",
    "reciprocity",
    "clustering",
    "centralization",
    "degree_assortativity",
    "mean_degree",
    "sd_degree",
    "lscc_size",
    "lwcc_size",
    "conductance",
    "edge_jaccard",
    "expectedness",
];

/// Columns describing a single segment, whose first differences are used in
/// novelty analysis.
pub const STANDARD_COLUMNS: [&str; 10] = [
    "n_nodes",
    "n_edges",
    "reciprocity",
    "clustering",
    "centralization",
    "degree_assortativity",
    "mean_degree",
    "sd_degree",
    "lscc_size",
    "lwcc_size",
];

/// Undirected simple degree of every node.
pub fn undirected_degrees(graph: &SegmentGraph) -> Vec<usize> {
    graph.undirected_neighbors().iter().map(Vec::len).collect()
}

/// Gini coefficient via the sorted-rank identity. Zero for empty, all-zero
/// or constant input.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x).sum();
    let nf = n as f64;
    (2.0 * weighted / (nf * total) - (nf + 1.0) / nf).max(0.0)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn standard_metrics(graph: &SegmentGraph) -> StructuralMetrics {
    let n = graph.n_nodes();
    if n == 0 {
        return StructuralMetrics {
            empty: true,
            assortativity_degenerate: true,
            ..Default::default()
        };
    }
    let n_edges = graph.n_edges();

    let reciprocated = graph
        .edge_indices()
        .filter(|&(s, t, _)| graph.out_edges(t).binary_search_by_key(&s, |&(x, _)| x).is_ok())
        .count();
    let reciprocity = if n_edges > 0 {
        reciprocated as f64 / n_edges as f64
    } else {
        0.0
    };

    let nb = graph.undirected_neighbors();
    let degrees: Vec<f64> = nb.iter().map(|v| v.len() as f64).collect();

    // transitivity: closed triples over connected triples
    let (mut triples, mut closed) = (0u64, 0u64);
    for adj in &nb {
        let d = adj.len() as u64;
        triples += d * d.saturating_sub(1) / 2;
        for (a_pos, &a) in adj.iter().enumerate() {
            for &b in &adj[a_pos + 1..] {
                if nb[a].binary_search(&b).is_ok() {
                    closed += 1;
                }
            }
        }
    }
    let clustering = if triples > 0 {
        closed as f64 / triples as f64
    } else {
        0.0
    };

    let (mut ends_a, mut ends_b) = (Vec::new(), Vec::new());
    for (u, adj) in nb.iter().enumerate() {
        for &v in adj {
            ends_a.push(degrees[u]);
            ends_b.push(degrees[v]);
        }
    }
    let assort = pearson(&ends_a, &ends_b);

    let nf = n as f64;
    let mean_degree = degrees.iter().sum::<f64>() / nf;
    let sd_degree = (degrees.iter().map(|d| (d - mean_degree).powi(2)).sum::<f64>() / nf).sqrt();

    let mut dg: DiGraph<(), ()> = DiGraph::with_capacity(n, n_edges);
    let ids: Vec<_> = (0..n).map(|_| dg.add_node(())).collect();
    let mut uf = UnionFind::new(n);
    for (s, t, _) in graph.edge_indices() {
        dg.add_edge(ids[s], ids[t], ());
        uf.union(s, t);
    }
    let lscc_size = tarjan_scc(&dg).iter().map(Vec::len).max().unwrap_or(0);
    let mut comp_sizes = vec![0usize; n];
    for v in 0..n {
        comp_sizes[uf.find(v)] += 1;
    }
    let lwcc_size = comp_sizes.into_iter().max().unwrap_or(0);

    StructuralMetrics {
        n_nodes: n,
        n_edges,
        reciprocity,
        clustering,
        centralization: gini(&degrees),
        degree_assortativity: assort.unwrap_or(0.0),
        mean_degree,
        sd_degree,
        lscc_size,
        lwcc_size,
        empty: false,
        assortativity_degenerate: assort.is_none(),
    }
}

/// Transition probabilities per out-edge, aligned with `graph.out_edges`.
fn transitions(graph: &SegmentGraph) -> Vec<Vec<(usize, f64)>> {
    (0..graph.n_nodes())
        .map(|k| {
            let total = graph.out_weight(k) as f64;
            graph
                .out_edges(k)
                .iter()
                .map(|&(l, w)| (l, w as f64 / total))
                .collect()
        })
        .collect()
}

struct PathWalker<'a> {
    trans: &'a [Vec<(usize, f64)>],
    cfg: ConductanceConfig,
    on_path: Vec<bool>,
}

impl<'a> PathWalker<'a> {
    fn new(trans: &'a [Vec<(usize, f64)>], cfg: ConductanceConfig) -> Self {
        PathWalker {
            trans,
            cfg,
            on_path: vec![false; trans.len()],
        }
    }

    /// Adds the probability of every admissible simple path out of `src`
    /// into `acc[end]`. With `stop_at`, paths end at that node.
    fn walk(&mut self, src: usize, acc: &mut [f64], stop_at: Option<usize>) {
        self.on_path[src] = true;
        self.step(src, 1.0, 0, acc, stop_at);
        self.on_path[src] = false;
    }

    fn step(&mut self, k: usize, prob: f64, depth: usize, acc: &mut [f64], stop_at: Option<usize>) {
        if depth >= self.cfg.max_path_len {
            return;
        }
        let trans = self.trans;
        for &(l, p) in &trans[k] {
            if self.on_path[l] {
                continue;
            }
            let next = prob * p;
            if next < self.cfg.prune_epsilon {
                continue;
            }
            acc[l] += next;
            if stop_at == Some(l) {
                continue;
            }
            self.on_path[l] = true;
            self.step(l, next, depth + 1, acc, stop_at);
            self.on_path[l] = false;
        }
    }
}

/// Cycle-free effective conductance from `i` to `j`. Zero when either node is
/// absent or `i == j`.
pub fn pair_conductance(graph: &SegmentGraph, i: &str, j: &str, cfg: &ConductanceConfig) -> f64 {
    let (Some(si), Some(sj)) = (graph.node_index(i), graph.node_index(j)) else {
        return 0.0;
    };
    if si == sj {
        return 0.0;
    }
    let trans = transitions(graph);
    let mut acc = vec![0.0; graph.n_nodes()];
    PathWalker::new(&trans, *cfg).walk(si, &mut acc, Some(sj));
    acc[sj]
}

/// Conductance from one source to every node (index-aligned; the source's own
/// entry is zero).
pub fn source_conductance(graph: &SegmentGraph, src: usize, cfg: &ConductanceConfig) -> Vec<f64> {
    let trans = transitions(graph);
    let mut acc = vec![0.0; graph.n_nodes()];
    PathWalker::new(&trans, *cfg).walk(src, &mut acc, None);
    acc
}

/// Sum of pair conductance over all ordered pairs, one bounded DFS per source.
/// Sources are reduced in index order, so the result does not depend on
/// thread scheduling.
pub fn graph_conductance(graph: &SegmentGraph, cfg: &ConductanceConfig) -> f64 {
    let trans = transitions(graph);
    let per_source: Vec<f64> = (0..graph.n_nodes())
        .into_par_iter()
        .map(|src| {
            let mut acc = vec![0.0; graph.n_nodes()];
            PathWalker::new(&trans, *cfg).walk(src, &mut acc, None);
            acc.iter().sum::<f64>()
        })
        .collect();
    per_source.iter().sum()
}

/// Jaccard overlap of the directed edge sets; degenerate 0 when both are empty.
pub fn edge_jaccard(current: &SegmentGraph, previous: &SegmentGraph) -> Flagged {
    let a = current.edge_set();
    let b = previous.edge_set();
    let union = a.union(&b).count();
    if union == 0 {
        return Flagged::degenerate(0.0);
    }
    Flagged::ok(a.intersection(&b).count() as f64 / union as f64)
}

/// Mean previous-segment conductance over the current segment's edges.
/// `None` when the current graph has no edges.
pub fn expectedness(current: &SegmentGraph, previous: &SegmentGraph, cfg: &ConductanceConfig) -> Option<f64> {
    let n_edges = current.n_edges();
    if n_edges == 0 {
        return None;
    }
    let trans = transitions(previous);
    let mut walker = PathWalker::new(&trans, *cfg);
    let mut acc = vec![0.0; previous.n_nodes()];
    let mut total = 0.0;
    for s in 0..current.n_nodes() {
        let out = current.out_edges(s);
        if out.is_empty() {
            continue;
        }
        let Some(ps) = previous.node_index(current.node_id(s)) else {
            continue;
        };
        acc.iter_mut().for_each(|a| *a = 0.0);
        walker.walk(ps, &mut acc, None);
        for &(t, _) in out {
            if let Some(pt) = previous.node_index(current.node_id(t)) {
                total += acc[pt];
            }
        }
    }
    Some(total / n_edges as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatPoint {
    pub lag: usize,
    /// `None` when no segment in range has edges.
    pub probability: Option<f64>,
}

/// Probability that an edge present at `t` is present again at `t + lag`,
/// pooled over all `t`, for lags `1..=max_lag`.
pub fn edge_repeat_curve(graphs: &[SegmentGraph], max_lag: usize) -> Result<Vec<RepeatPoint>> {
    if graphs.len() < 2 {
        return Err(CoevoError::invalid("edge repeat curve needs at least 2 segments"));
    }
    if max_lag < 1 || max_lag >= graphs.len() {
        return Err(CoevoError::invalid(format!(
            "max lag must be in 1..{}, got {max_lag}",
            graphs.len() - 1
        )));
    }
    let sets: Vec<_> = graphs.iter().map(SegmentGraph::edge_set).collect();
    Ok((1..=max_lag)
        .map(|lag| {
            let (mut hit, mut total) = (0usize, 0usize);
            for t in 0..sets.len() - lag {
                total += sets[t].len();
                hit += sets[t].intersection(&sets[t + lag]).count();
            }
            RepeatPoint {
                lag,
                probability: (total > 0).then(|| hit as f64 / total as f64),
            }
        })
        .collect())
}

/// Metrics for every segment graph in order. Segment 0 has no edge Jaccard
/// or expectedness.
pub fn segment_metrics(graphs: &[SegmentGraph], cfg: &ConductanceConfig) -> Vec<NetMetricRow> {
    (0..graphs.len())
        .into_par_iter()
        .map(|t| {
            let g = &graphs[t];
            let (edge_jaccard, expectedness) = if t == 0 {
                (None, None)
            } else {
                let j = edge_jaccard(g, &graphs[t - 1]);
                (
                    (!j.degenerate).then_some(j.value),
                    expectedness(g, &graphs[t - 1], cfg),
                )
            };
            NetMetricRow {
                structural: standard_metrics(g),
                conductance: graph_conductance(g, cfg),
                edge_jaccard,
                expectedness,
            }
        })
        .collect()
}

/// Structural metrics as a series with the [`NET_COLUMNS`] columns. Degree
/// assortativity is missing where it is degenerate.
pub fn net_series(index: Vec<usize>, rows: &[NetMetricRow]) -> MetricSeries {
    let mut s = MetricSeries::new(index);
    let col = |f: &dyn Fn(&NetMetricRow) -> Option<f64>| rows.iter().map(f).collect::<Vec<_>>();
    s.set_column("n_nodes", col(&|r| Some(r.structural.n_nodes as f64)));
    s.set_column("n_edges", col(&|r| Some(r.structural.n_edges as f64)));
    s.set_column("reciprocity", col(&|r| Some(r.structural.reciprocity)));
    s.set_column("clustering", col(&|r| Some(r.structural.clustering)));
    s.set_column("centralization", col(&|r| Some(r.structural.centralization)));
    s.set_column(
        "degree_assortativity",
        col(&|r| (!r.structural.assortativity_degenerate).then_some(r.structural.degree_assortativity)),
    );
    s.set_column("mean_degree", col(&|r| Some(r.structural.mean_degree)));
    s.set_column("sd_degree", col(&|r| Some(r.structural.sd_degree)));
    s.set_column("lscc_size", col(&|r| Some(r.structural.lscc_size as f64)));
    s.set_column("lwcc_size", col(&|r| Some(r.structural.lwcc_size as f64)));
    s.set_column("conductance", col(&|r| Some(r.conductance)));
    s.set_column("edge_jaccard", col(&|r| r.edge_jaccard));
    s.set_column("expectedness", col(&|r| r.expectedness));
    s
}
