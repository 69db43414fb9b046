//! Content diversity within a segment and novelty between segments.
//!
//! Discrete payloads (assets, quantized numeric messages) use the entropy of
//! the item distribution (bits) and the Jaccard overlap of item sets. Text
//! payloads use TF-IDF cosine similarity between users or documents, and the
//! symmetric KL divergence (nats) between additively smoothed unigram models
//! of consecutive segments.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoevoError, Result};
use crate::ingest::{Payload, PayloadKind, Segment, SegmentGraph};
use crate::series::{Flagged, MetricSeries};
use crate::sim::message_distance;

pub const DEFAULT_ALPHA: f64 = 0.01;

/// Lowercases, splits on runs of non-alphanumeric characters and drops
/// tokens shorter than two characters. With `strip_quotes`, lines starting
/// with `>` are skipped.
pub fn tokenize(text: &str, strip_quotes: bool) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        if strip_quotes && line.trim_start().starts_with('>') {
            continue;
        }
        for tok in line.split(|c: char| !c.is_alphanumeric()) {
            if tok.chars().count() >= 2 {
                out.push(tok.to_lowercase());
            }
        }
    }
    out
}

fn payload_tokens(payload: &Payload, strip_quotes: bool) -> Vec<String> {
    match payload {
        Payload::Tokens(frags) => frags.iter().flat_map(|f| tokenize(f, strip_quotes)).collect(),
        _ => Vec::new(),
    }
}

/// Discrete key of an asset or numeric payload.
fn item_key(payload: &Payload) -> Option<String> {
    match payload {
        Payload::Asset(a) => Some(a.clone()),
        Payload::Numeric(v) => Some(format!("{}", v.round() as i64)),
        Payload::Tokens(_) => None,
    }
}

fn require_discrete(segment: &Segment) -> Result<()> {
    match segment.payload_kind() {
        Some(PayloadKind::Tokens) => Err(CoevoError::invalid("item metrics need asset or numeric payloads")),
        _ => Ok(()),
    }
}

fn item_counts(segment: &Segment) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for e in &segment.events {
        if let Some(k) = item_key(&e.payload) {
            *counts.entry(k).or_insert(0) += 1;
        }
    }
    counts
}

/// Shannon entropy (bits) of the distribution of items over the segment's events.
pub fn entropy_bits<I: IntoIterator<Item = usize>>(counts: I) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let h = -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p.log2()
        })
        .sum::<f64>();
    h.max(0.0)
}

pub fn asset_entropy(segment: &Segment) -> Result<f64> {
    require_discrete(segment)?;
    if segment.events.is_empty() {
        return Err(CoevoError::invalid("entropy of an empty segment"));
    }
    Ok(entropy_bits(item_counts(segment).into_values()))
}

/// Jaccard overlap of the two segments' item sets.
pub fn asset_jaccard(current: &Segment, previous: &Segment) -> Result<Flagged> {
    require_discrete(current)?;
    require_discrete(previous)?;
    let a: BTreeSet<String> = item_counts(current).into_keys().collect();
    let b: BTreeSet<String> = item_counts(previous).into_keys().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return Ok(Flagged::degenerate(0.0));
    }
    Ok(Flagged::ok(a.intersection(&b).count() as f64 / union as f64))
}

/// Document frequencies over a corpus where each `doc_id` is one document.
#[derive(Debug, Clone, Default)]
pub struct IdfTable {
    df: HashMap<String, usize>,
    n_docs: usize,
}

impl IdfTable {
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut t = IdfTable::default();
        for doc in docs {
            t.n_docs += 1;
            let uniq: HashSet<&String> = doc.iter().collect();
            for w in uniq {
                *t.df.entry(w.clone()).or_insert(0) += 1;
            }
        }
        t
    }

    /// One document per distinct `doc_id` across all segments.
    pub fn from_segments(segments: &[Segment], strip_quotes: bool) -> Self {
        let docs: Vec<Vec<String>> = distinct_docs(segments.iter().flat_map(|s| &s.events))
            .into_iter()
            .map(|e| payload_tokens(&e.payload, strip_quotes))
            .collect();
        Self::from_documents(docs.iter().map(Vec::as_slice))
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn df(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn idf(&self, token: &str) -> f64 {
        (self.n_docs as f64 / (1.0 + self.df(token) as f64)).ln() + 1.0
    }
}

/// First event of each document, in order.
fn distinct_docs<'a>(
    events: impl IntoIterator<Item = &'a crate::ingest::EventRecord>,
) -> Vec<&'a crate::ingest::EventRecord> {
    let mut seen = HashSet::new();
    events
        .into_iter()
        .filter(|e| seen.insert(e.doc_id.as_str()))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector(pub BTreeMap<String, f64>);

impl SparseVector {
    pub fn get(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (small, large) = if self.0.len() <= other.0.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .0
            .iter()
            .filter_map(|(k, v)| large.0.get(k).map(|w| v * w))
            .sum()
    }
}

/// Weighting used by [`tfidf_vector`], recorded in run manifests.
pub const TFIDF_WEIGHTING: &str = "tf * (ln(N / (1 + df)) + 1)";

/// TF-IDF weights `tf(w) * (ln(N / (1 + df(w))) + 1)`. An empty token list
/// gives a degenerate zero vector.
pub fn tfidf_vector(tokens: &[String], idf: &IdfTable) -> Result<(SparseVector, bool)> {
    if idf.n_docs() == 0 {
        return Err(CoevoError::invalid(
            "TF-IDF needs a corpus of at least one document",
        ));
    }
    let mut tf: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokens {
        *tf.entry(t.clone()).or_insert(0.0) += 1.0;
    }
    let v = tf
        .into_iter()
        .map(|(w, c)| {
            let weight = c * idf.idf(&w);
            (w, weight)
        })
        .collect();
    Ok((SparseVector(v), tokens.is_empty()))
}

/// Cosine of the angle between two weight vectors; degenerate 0 when either
/// has zero norm.
pub fn cosine_similarity(x: &SparseVector, y: &SparseVector) -> Flagged {
    let (nx, ny) = (x.norm(), y.norm());
    if nx == 0.0 || ny == 0.0 {
        return Flagged::degenerate(0.0);
    }
    Flagged::ok((x.dot(y) / (nx * ny)).clamp(0.0, 1.0))
}

/// How text is grouped before comparing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextUnit {
    /// Concatenate each actor's documents (broadcast-heavy logs).
    User,
    /// Every document is its own unit; only `sim_all` is defined.
    Document,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassSimilarity {
    pub direct: Option<f64>,
    pub indirect: Option<f64>,
    pub disconnected: Option<f64>,
    pub all: Option<f64>,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    sum: [f64; 4],
    n: [usize; 4],
}

impl Acc {
    fn add(&mut self, class: usize, v: f64) {
        self.sum[class] += v;
        self.n[class] += 1;
        self.sum[3] += v;
        self.n[3] += 1;
    }

    fn merge(mut self, other: &Acc) -> Acc {
        for c in 0..4 {
            self.sum[c] += other.sum[c];
            self.n[c] += other.n[c];
        }
        self
    }

    fn mean(&self, c: usize) -> Option<f64> {
        (self.n[c] > 0).then(|| self.sum[c] / self.n[c] as f64)
    }
}

/// Mean cosine similarity over unordered unit pairs, split by how the pair is
/// connected in the segment graph: an edge in either direction (direct), same
/// weak component without an edge (indirect), or different components
/// (disconnected). Users with no tokens are left out; users absent from the
/// graph count as singleton components.
pub fn pairwise_similarity_by_class(
    segment: &Segment,
    graph: &SegmentGraph,
    idf: &IdfTable,
    unit: TextUnit,
    strip_quotes: bool,
) -> Result<ClassSimilarity> {
    let docs = distinct_docs(&segment.events);
    let units: Vec<(String, Vec<String>)> = match unit {
        TextUnit::User => {
            let mut by_user: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for e in &docs {
                by_user
                    .entry(e.actor.clone())
                    .or_default()
                    .extend(payload_tokens(&e.payload, strip_quotes));
            }
            by_user.into_iter().filter(|(_, t)| !t.is_empty()).collect()
        }
        TextUnit::Document => docs
            .iter()
            .map(|e| (e.doc_id.clone(), payload_tokens(&e.payload, strip_quotes)))
            .filter(|(_, t)| !t.is_empty())
            .collect(),
    };
    let vectors: Vec<SparseVector> = units
        .iter()
        .map(|(_, t)| tfidf_vector(t, idf).map(|(v, _)| v))
        .collect::<Result<_>>()?;

    let nb = graph.undirected_neighbors();
    let mut uf = UnionFind::new(graph.n_nodes());
    for (u, adj) in nb.iter().enumerate() {
        for &v in adj {
            uf.union(u, v);
        }
    }
    let node_of: Vec<Option<usize>> = units
        .iter()
        .map(|(id, _)| match unit {
            TextUnit::User => graph.node_index(id),
            TextUnit::Document => None,
        })
        .collect();

    let class_of = |i: usize, j: usize| -> usize {
        match (node_of[i], node_of[j]) {
            (Some(a), Some(b)) if nb[a].binary_search(&b).is_ok() => 0,
            (Some(a), Some(b)) if uf.find(a) == uf.find(b) => 1,
            _ => 2,
        }
    };

    let partials: Vec<Acc> = (0..vectors.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = Acc::default();
            for j in i + 1..vectors.len() {
                let s = cosine_similarity(&vectors[i], &vectors[j]).value;
                acc.add(class_of(i, j), s);
            }
            acc
        })
        .collect();
    let acc = partials.iter().fold(Acc::default(), |a, b| a.merge(b));

    Ok(match unit {
        TextUnit::User => ClassSimilarity {
            direct: acc.mean(0),
            indirect: acc.mean(1),
            disconnected: acc.mean(2),
            all: acc.mean(3),
        },
        TextUnit::Document => ClassSimilarity {
            all: acc.mean(3),
            ..Default::default()
        },
    })
}

/// Token counts of a body of text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenDistribution {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl TokenDistribution {
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a String>) -> Self {
        let mut d = TokenDistribution::default();
        for t in tokens {
            *d.counts.entry(t.clone()).or_insert(0) += 1;
            d.total += 1;
        }
        d
    }

    /// Additively smoothed probabilities over `vocabulary`:
    /// `(count(w) + alpha) / (total + alpha * |V|)`.
    pub fn probabilities(&self, vocabulary: &[String], alpha: f64) -> Result<Vec<f64>> {
        if vocabulary.is_empty() {
            return Err(CoevoError::invalid("language model over an empty vocabulary"));
        }
        if !(alpha > 0.0) {
            return Err(CoevoError::config("smoothing alpha must be positive"));
        }
        let denom = self.total as f64 + alpha * vocabulary.len() as f64;
        Ok(vocabulary
            .iter()
            .map(|w| (self.counts.get(w).copied().unwrap_or(0) as f64 + alpha) / denom)
            .collect())
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &String> {
        self.counts.keys()
    }
}

/// Which actors' text enters the segment language model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeFilter {
    All,
    /// Actors that sent or received at least one directed interaction in the segment.
    NonIsolated,
}

/// Language model of one segment: each document counted once.
pub fn language_model(segment: &Segment, filter: NodeFilter, strip_quotes: bool) -> TokenDistribution {
    let active: HashSet<&str> = match filter {
        NodeFilter::All => HashSet::new(),
        NodeFilter::NonIsolated => segment
            .events
            .iter()
            .filter(|e| !e.targets.is_empty())
            .flat_map(|e| std::iter::once(e.actor.as_str()).chain(e.targets.iter().map(String::as_str)))
            .collect(),
    };
    let tokens: Vec<String> = distinct_docs(&segment.events)
        .into_iter()
        .filter(|e| filter == NodeFilter::All || active.contains(e.actor.as_str()))
        .flat_map(|e| payload_tokens(&e.payload, strip_quotes))
        .collect();
    TokenDistribution::from_tokens(&tokens)
}

/// `sum_w (p(w) - q(w)) ln(p(w) / q(w))`.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| (a - b) * (a / b).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Symmetric KL divergence between the smoothed models of two distributions,
/// over their union vocabulary. `None` if either side has no tokens.
pub fn lm_divergence_of(
    current: &TokenDistribution,
    previous: &TokenDistribution,
    alpha: f64,
) -> Result<Option<f64>> {
    if current.total == 0 || previous.total == 0 {
        return Ok(None);
    }
    let vocab: Vec<String> = current
        .vocabulary()
        .chain(previous.vocabulary())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let p = current.probabilities(&vocab, alpha)?;
    let q = previous.probabilities(&vocab, alpha)?;
    Ok(Some(symmetric_kl(&p, &q)))
}

pub fn lm_divergence(
    current: &Segment,
    previous: &Segment,
    alpha: f64,
    filter: NodeFilter,
    strip_quotes: bool,
) -> Result<Option<f64>> {
    lm_divergence_of(
        &language_model(current, filter, strip_quotes),
        &language_model(previous, filter, strip_quotes),
        alpha,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentConfig {
    pub alpha: f64,
    pub strip_quotes: bool,
    pub text_unit: TextUnit,
}

impl Default for ContentConfig {
    fn default() -> Self {
        ContentConfig {
            alpha: DEFAULT_ALPHA,
            strip_quotes: false,
            text_unit: TextUnit::User,
        }
    }
}

/// Content metrics of one segment. Entries that do not apply to the payload
/// kind, or are undefined for the segment, are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ContentMetricRow {
    pub item_entropy: Option<f64>,
    pub item_jaccard: Option<f64>,
    pub value_sd: Option<f64>,
    pub message_distance: Option<f64>,
    pub message_distance_sum: Option<f64>,
    pub sim: ClassSimilarity,
    pub lm_dist_all: Option<f64>,
    pub lm_dist_noniso: Option<f64>,
}

fn numeric_values(segment: &Segment) -> Vec<f64> {
    segment
        .events
        .iter()
        .filter_map(|e| match e.payload {
            Payload::Numeric(v) => Some(v),
            _ => None,
        })
        .collect()
}

fn population_sd(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Content metrics for every segment. `graphs` must be aligned with `segments`.
pub fn content_metrics(
    segments: &[Segment],
    graphs: &[SegmentGraph],
    kind: PayloadKind,
    cfg: &ContentConfig,
) -> Result<Vec<ContentMetricRow>> {
    if segments.len() != graphs.len() {
        return Err(CoevoError::invalid("segments and graphs are not aligned"));
    }
    if !(cfg.alpha > 0.0) {
        return Err(CoevoError::config("smoothing alpha must be positive"));
    }
    let idf = match kind {
        PayloadKind::Tokens => Some(IdfTable::from_segments(segments, cfg.strip_quotes)),
        _ => None,
    };
    (0..segments.len())
        .into_par_iter()
        .map(|t| {
            let seg = &segments[t];
            let prev = t.checked_sub(1).map(|p| &segments[p]);
            let mut row = ContentMetricRow::default();
            match kind {
                PayloadKind::Asset | PayloadKind::Numeric => {
                    if !seg.events.is_empty() {
                        row.item_entropy = Some(asset_entropy(seg)?);
                    }
                    if let Some(p) = prev {
                        let j = asset_jaccard(seg, p)?;
                        row.item_jaccard = (!j.degenerate).then_some(j.value);
                    }
                    if kind == PayloadKind::Numeric {
                        let vals = numeric_values(seg);
                        row.value_sd = population_sd(&vals);
                        if let Some(p) = prev {
                            let pv = numeric_values(p);
                            row.message_distance = message_distance(&vals, &pv, false);
                            row.message_distance_sum = message_distance(&vals, &pv, true);
                        }
                    }
                }
                PayloadKind::Tokens => {
                    let idf = idf.as_ref().expect("idf built for token payloads");
                    row.sim =
                        pairwise_similarity_by_class(seg, &graphs[t], idf, cfg.text_unit, cfg.strip_quotes)?;
                    if let Some(p) = prev {
                        row.lm_dist_all =
                            lm_divergence(seg, p, cfg.alpha, NodeFilter::All, cfg.strip_quotes)?;
                        row.lm_dist_noniso =
                            lm_divergence(seg, p, cfg.alpha, NodeFilter::NonIsolated, cfg.strip_quotes)?;
                    }
                }
            }
            Ok(row)
        })
        .collect()
}

/// Column names emitted for each payload kind.
pub fn content_columns(kind: PayloadKind) -> &'static [&'static str] {
    match kind {
        PayloadKind::Asset => &["asset_entropy", "asset_jaccard"],
        PayloadKind::Numeric => &[
            "msg_entropy",
            "msg_jaccard",
            "msg_sd",
            "msg_distance",
            "msg_distance_sum",
        ],
        PayloadKind::Tokens => &[
            "sim_direct",
            "sim_indirect",
            "sim_disconnected",
            "sim_all",
            "lm_dist_all",
            "lm_dist_noniso",
        ],
    }
}

pub fn content_series(index: Vec<usize>, rows: &[ContentMetricRow], kind: PayloadKind) -> MetricSeries {
    let mut s = MetricSeries::new(index);
    let col = |f: &dyn Fn(&ContentMetricRow) -> Option<f64>| rows.iter().map(f).collect::<Vec<_>>();
    match kind {
        PayloadKind::Asset => {
            s.set_column("asset_entropy", col(&|r| r.item_entropy));
            s.set_column("asset_jaccard", col(&|r| r.item_jaccard));
        }
        PayloadKind::Numeric => {
            s.set_column("msg_entropy", col(&|r| r.item_entropy));
            s.set_column("msg_jaccard", col(&|r| r.item_jaccard));
            s.set_column("msg_sd", col(&|r| r.value_sd));
            s.set_column("msg_distance", col(&|r| r.message_distance));
            s.set_column("msg_distance_sum", col(&|r| r.message_distance_sum));
        }
        PayloadKind::Tokens => {
            s.set_column("sim_direct", col(&|r| r.sim.direct));
            s.set_column("sim_indirect", col(&|r| r.sim.indirect));
            s.set_column("sim_disconnected", col(&|r| r.sim.disconnected));
            s.set_column("sim_all", col(&|r| r.sim.all));
            s.set_column("lm_dist_all", col(&|r| r.lm_dist_all));
            s.set_column("lm_dist_noniso", col(&|r| r.lm_dist_noniso));
        }
    }
    s
}
