//! Event-log parsing, fixed-action segmentation and per-segment graphs.
//!
//! An *action* is one document (tweet, email, transfer, simulated message).
//! An email to k recipients shows up as k events sharing one `doc_id`; it
//! contributes k edges to the segment graph but counts once toward the
//! segment size.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoevoError, Result};

/// Default recipient cap; larger fan-outs are treated as mass mailings.
pub const DEFAULT_MAX_TARGETS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Tokens,
    Asset,
    Numeric,
}

impl FromStr for PayloadKind {
    type Err = CoevoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tokens" => Ok(PayloadKind::Tokens),
            "asset" => Ok(PayloadKind::Asset),
            "numeric" => Ok(PayloadKind::Numeric),
            other => Err(CoevoError::config(format!("unknown payload kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PayloadKind::Tokens => "tokens",
            PayloadKind::Asset => "asset",
            PayloadKind::Numeric => "numeric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Jsonl,
    Csv,
}

impl FromStr for LogFormat {
    type Err = CoevoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(LogFormat::Jsonl),
            "csv" => Ok(LogFormat::Csv),
            other => Err(CoevoError::config(format!("unknown log format `{other}`"))),
        }
    }
}

/// Content carried by one event. Token payloads hold raw text fragments;
/// tokenization happens in the content metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Tokens(Vec<String>),
    Asset(String),
    Numeric(f64),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Tokens(_) => PayloadKind::Tokens,
            Payload::Asset(_) => PayloadKind::Asset,
            Payload::Numeric(_) => PayloadKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub timestamp: i64,
    pub actor: String,
    pub targets: Vec<String>,
    pub doc_id: String,
    pub payload: Payload,
    pub group: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub format: LogFormat,
    pub payload: PayloadKind,
    pub max_targets: usize,
}

impl ParseOptions {
    pub fn new(format: LogFormat, payload: PayloadKind) -> Self {
        ParseOptions {
            format,
            payload,
            max_targets: DEFAULT_MAX_TARGETS,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub events: Vec<EventRecord>,
    /// Records dropped for exceeding `max_targets`.
    pub dropped_mass: usize,
    /// Self-targets removed from recipient lists.
    pub self_loops_removed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonEvent {
    ts: i64,
    actor: String,
    #[serde(default)]
    targets: Vec<String>,
    doc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    asset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvEvent {
    ts: i64,
    actor: String,
    targets: String,
    doc: String,
    payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
}

fn parse_err(line: usize, message: impl Into<String>) -> CoevoError {
    CoevoError::Parse {
        line,
        message: message.into(),
    }
}

fn check_numeric(value: f64, line: usize) -> Result<f64> {
    if value.is_finite() && (1.0..=100.0).contains(&value) {
        Ok(value)
    } else {
        Err(parse_err(
            line,
            format!("numeric message {value} outside [1, 100]"),
        ))
    }
}

fn json_payload(ev: &mut JsonEvent, kind: PayloadKind, line: usize) -> Result<Payload> {
    let present = ev.tokens.is_some() as u8 + ev.asset.is_some() as u8 + ev.value.is_some() as u8;
    if present != 1 {
        return Err(parse_err(
            line,
            "expected exactly one of `tokens`, `asset`, `value`",
        ));
    }
    match kind {
        PayloadKind::Tokens => ev
            .tokens
            .take()
            .map(Payload::Tokens)
            .ok_or_else(|| parse_err(line, "payload kind is tokens but `tokens` is missing")),
        PayloadKind::Asset => ev
            .asset
            .take()
            .map(Payload::Asset)
            .ok_or_else(|| parse_err(line, "payload kind is asset but `asset` is missing")),
        PayloadKind::Numeric => match ev.value {
            Some(v) => Ok(Payload::Numeric(check_numeric(v, line)?)),
            None => Err(parse_err(line, "payload kind is numeric but `value` is missing")),
        },
    }
}

fn csv_payload(raw: &str, kind: PayloadKind, line: usize) -> Result<Payload> {
    match kind {
        PayloadKind::Tokens => Ok(Payload::Tokens(
            raw.split_whitespace().map(str::to_owned).collect(),
        )),
        PayloadKind::Asset => {
            if raw.is_empty() {
                Err(parse_err(line, "empty asset id"))
            } else {
                Ok(Payload::Asset(raw.to_owned()))
            }
        }
        PayloadKind::Numeric => {
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad numeric payload `{raw}`")))?;
            Ok(Payload::Numeric(check_numeric(v, line)?))
        }
    }
}

/// Applies the actor/target rules shared by both formats. Returns `None` when
/// the record is a mass mailing.
fn finish_record(
    mut record: EventRecord,
    line: usize,
    opts: &ParseOptions,
    out: &mut ParsedLog,
) -> Result<Option<EventRecord>> {
    if record.actor.is_empty() {
        return Err(parse_err(line, "empty actor"));
    }
    if record.targets.iter().any(String::is_empty) {
        return Err(parse_err(line, "empty target id"));
    }
    let before = record.targets.len();
    record.targets.retain(|t| *t != record.actor);
    out.self_loops_removed += before - record.targets.len();
    let mut seen = HashSet::new();
    record.targets.retain(|t| seen.insert(t.clone()));
    if record.targets.len() > opts.max_targets {
        out.dropped_mass += 1;
        return Ok(None);
    }
    Ok(Some(record))
}

/// Parses a JSONL or CSV event log. Records come back sorted by timestamp,
/// ties kept in input order.
pub fn parse_events<R: Read>(reader: R, opts: &ParseOptions) -> Result<ParsedLog> {
    let mut out = ParsedLog::default();
    match opts.format {
        LogFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let lineno = i + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut ev: JsonEvent =
                    serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
                let payload = json_payload(&mut ev, opts.payload, lineno)?;
                let record = EventRecord {
                    timestamp: ev.ts,
                    actor: ev.actor,
                    targets: ev.targets,
                    doc_id: ev.doc,
                    payload,
                    group: ev.group,
                };
                if let Some(r) = finish_record(record, lineno, opts, &mut out)? {
                    out.events.push(r);
                }
            }
        }
        LogFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
            let headers = rdr.headers()?.clone();
            for row in rdr.records() {
                let row = row?;
                let lineno = row.position().map(|p| p.line() as usize).unwrap_or(0);
                let ev: CsvEvent = row
                    .deserialize(Some(&headers))
                    .map_err(|e| parse_err(lineno, e.to_string()))?;
                let targets = ev
                    .targets
                    .split(';')
                    .filter(|t| !t.is_empty())
                    .map(str::to_owned)
                    .collect();
                let group = ev.group.filter(|g| !g.is_empty());
                let record = EventRecord {
                    timestamp: ev.ts,
                    actor: ev.actor,
                    targets,
                    doc_id: ev.doc,
                    payload: csv_payload(&ev.payload, opts.payload, lineno)?,
                    group,
                };
                if let Some(r) = finish_record(record, lineno, opts, &mut out)? {
                    out.events.push(r);
                }
            }
        }
    }
    // stable sort keeps input order among equal timestamps
    out.events.sort_by_key(|e| e.timestamp);
    Ok(out)
}

fn to_json_event(ev: &EventRecord) -> JsonEvent {
    let (tokens, asset, value) = match &ev.payload {
        Payload::Tokens(t) => (Some(t.clone()), None, None),
        Payload::Asset(a) => (None, Some(a.clone()), None),
        Payload::Numeric(v) => (None, None, Some(*v)),
    };
    JsonEvent {
        ts: ev.timestamp,
        actor: ev.actor.clone(),
        targets: ev.targets.clone(),
        doc: ev.doc_id.clone(),
        tokens,
        asset,
        value,
        group: ev.group.clone(),
    }
}

pub fn write_jsonl<W: Write>(events: &[EventRecord], mut writer: W) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut writer, &to_json_event(ev))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes the CSV form. Token payloads are space-joined, so fragments that
/// contain whitespace do not survive a CSV round trip.
pub fn write_csv<W: Write>(events: &[EventRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ts", "actor", "targets", "doc", "payload", "group"])?;
    for ev in events {
        let payload = match &ev.payload {
            Payload::Tokens(t) => t.join(" "),
            Payload::Asset(a) => a.clone(),
            Payload::Numeric(v) => v.to_string(),
        };
        w.write_record([
            ev.timestamp.to_string(),
            ev.actor.clone(),
            ev.targets.join(";"),
            ev.doc_id.clone(),
            payload,
            ev.group.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub index: usize,
    pub events: Vec<EventRecord>,
    /// Number of distinct documents in the segment.
    pub action_count: usize,
    /// Trailing segment with fewer than the configured number of actions.
    pub partial: bool,
}

impl Segment {
    pub fn payload_kind(&self) -> Option<PayloadKind> {
        self.events.first().map(|e| e.payload.kind())
    }
}

/// Splits sorted events into runs of `segment_size` distinct documents.
///
/// Events of a document already open in the current segment stay with it;
/// a document only counts once toward the size.
pub fn segment_by_actions(events: &[EventRecord], segment_size: usize) -> Result<Vec<Segment>> {
    if segment_size == 0 {
        return Err(CoevoError::config("segment size must be at least 1"));
    }
    let mut segments = Vec::new();
    let mut current: Vec<EventRecord> = Vec::new();
    let mut docs: HashSet<&str> = HashSet::new();
    for ev in events {
        if !docs.contains(ev.doc_id.as_str()) && docs.len() == segment_size {
            segments.push(Segment {
                index: segments.len(),
                events: std::mem::take(&mut current),
                action_count: segment_size,
                partial: false,
            });
            docs.clear();
        }
        docs.insert(ev.doc_id.as_str());
        current.push(ev.clone());
    }
    if !current.is_empty() {
        let n = docs.len();
        segments.push(Segment {
            index: segments.len(),
            events: current,
            action_count: n,
            partial: n < segment_size,
        });
    }
    Ok(segments)
}

/// Directed weighted graph of one segment. Node ids are kept sorted so every
/// traversal visits nodes in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    /// Out-adjacency per node, sorted by target index.
    out: Vec<Vec<(usize, u64)>>,
    include_isolated: bool,
}

impl SegmentGraph {
    /// Builds a graph from explicit nodes and weighted edges. Edge endpoints
    /// are added to the node set; self-loops and zero weights are ignored and
    /// repeated edges accumulate.
    pub fn from_edges<S: AsRef<str>>(
        nodes: impl IntoIterator<Item = S>,
        edges: impl IntoIterator<Item = (S, S, u64)>,
    ) -> Self {
        let mut node_set: BTreeSet<String> = nodes.into_iter().map(|n| n.as_ref().to_owned()).collect();
        let mut weights: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (a, b, w) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            if a == b || w == 0 {
                continue;
            }
            node_set.insert(a.to_owned());
            node_set.insert(b.to_owned());
            *weights.entry((a.to_owned(), b.to_owned())).or_insert(0) += w;
        }
        let nodes: Vec<String> = node_set.into_iter().collect();
        let index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut out = vec![Vec::new(); nodes.len()];
        for ((a, b), w) in weights {
            out[index[&a]].push((index[&b], w));
        }
        for adj in &mut out {
            adj.sort_unstable();
        }
        SegmentGraph {
            nodes,
            index,
            out,
            include_isolated: true,
        }
    }

    pub fn empty() -> Self {
        Self::from_edges(Vec::<&str>::new(), Vec::new())
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn include_isolated(&self) -> bool {
        self.include_isolated
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node_id(&self, idx: usize) -> &str {
        &self.nodes[idx]
    }

    pub fn out_edges(&self, idx: usize) -> &[(usize, u64)] {
        &self.out[idx]
    }

    pub fn weight(&self, a: &str, b: &str) -> Option<u64> {
        let (ia, ib) = (self.node_index(a)?, self.node_index(b)?);
        self.out[ia]
            .binary_search_by_key(&ib, |&(t, _)| t)
            .ok()
            .map(|pos| self.out[ia][pos].1)
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.weight(a, b).is_some()
    }

    pub fn out_weight(&self, idx: usize) -> u64 {
        self.out[idx].iter().map(|&(_, w)| w).sum()
    }

    /// Edges as `(source index, target index, weight)` in index order.
    pub fn edge_indices(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(s, adj)| adj.iter().map(move |&(t, w)| (s, t, w)))
    }

    /// Directed edge set by node id.
    pub fn edge_set(&self) -> BTreeSet<(&str, &str)> {
        self.edge_indices()
            .map(|(s, t, _)| (self.nodes[s].as_str(), self.nodes[t].as_str()))
            .collect()
    }

    /// Undirected simple projection as sorted neighbour lists.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.nodes.len()];
        for (s, t, _) in self.edge_indices() {
            nb[s].insert(t);
            nb[t].insert(s);
        }
        nb.into_iter().map(|s| s.into_iter().collect()).collect()
    }
}

/// Builds the graph of one segment. Edge weight counts events from actor to
/// target. With `include_isolated`, actors of target-less events become
/// degree-0 nodes; otherwise only edge endpoints are nodes.
pub fn build_segment_graph(segment: &Segment, include_isolated: bool) -> SegmentGraph {
    let actors: Vec<&str> = if include_isolated {
        segment.events.iter().map(|e| e.actor.as_str()).collect()
    } else {
        Vec::new()
    };
    let edges = segment.events.iter().flat_map(|e| {
        e.targets
            .iter()
            .map(move |t| (e.actor.as_str(), t.as_str(), 1u64))
    });
    let mut g = SegmentGraph::from_edges(actors, edges);
    g.include_isolated = include_isolated;
    g
}

/// Metadata stored next to the per-segment files of a segment directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentManifest {
    pub segment_size: usize,
    pub payload: PayloadKind,
    pub include_isolated: bool,
    pub n_segments: usize,
    pub last_partial: bool,
    pub n_events: usize,
    pub dropped_mass: usize,
    pub self_loops_removed: usize,
}

pub const SEGMENT_MANIFEST: &str = "segments.json";

fn segment_file_name(index: usize) -> String {
    format!("segment_{index:05}.jsonl")
}

pub fn write_segment_dir(dir: &Path, segments: &[Segment], manifest: &SegmentManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    for seg in segments {
        let f = fs::File::create(dir.join(segment_file_name(seg.index)))?;
        let mut w = std::io::BufWriter::new(f);
        write_jsonl(&seg.events, &mut w)?;
        w.flush()?;
    }
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join(SEGMENT_MANIFEST), text)?;
    Ok(())
}

/// Reads a segment directory written by [`write_segment_dir`].
pub fn read_segment_dir(dir: &Path) -> Result<(SegmentManifest, Vec<Segment>)> {
    let manifest: SegmentManifest = serde_json::from_str(&fs::read_to_string(dir.join(SEGMENT_MANIFEST))?)?;
    let opts = ParseOptions {
        format: LogFormat::Jsonl,
        payload: manifest.payload,
        max_targets: usize::MAX,
    };
    let mut segments = Vec::with_capacity(manifest.n_segments);
    for index in 0..manifest.n_segments {
        let f = fs::File::open(dir.join(segment_file_name(index)))?;
        let parsed = parse_events(f, &opts)?;
        let action_count = parsed
            .events
            .iter()
            .map(|e| e.doc_id.as_str())
            .collect::<HashSet<_>>()
            .len();
        segments.push(Segment {
            index,
            events: parsed.events,
            action_count,
            partial: manifest.last_partial && index + 1 == manifest.n_segments,
        });
    }
    Ok((manifest, segments))
}
