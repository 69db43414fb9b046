//! Stage computations shared by the single-stage subcommands and `pipeline`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use coevo_core::contentmetrics::{content_columns, content_metrics, content_series, ContentConfig};
use coevo_core::ingest::{
    build_segment_graph, read_segment_dir, segment_by_actions, EventRecord, PayloadKind, Segment,
    SegmentGraph, SegmentManifest, SEGMENT_MANIFEST,
};
use coevo_core::netmetrics::{
    edge_repeat_curve, net_series, segment_metrics, ConductanceConfig, RepeatPoint, NET_COLUMNS,
    STANDARD_COLUMNS,
};
use coevo_core::series::{fmt_f64, fmt_opt, is_table_header, merge_by_group, read_tables, MetricSeries};
use coevo_core::stats::{
    adf_test, correlate_groups, incremental_r2_curve, pp_test, CorrelationReport, CurvePoint, Ordering,
    RegressionMethod, Screening, StationarityResult, MIN_STATIONARITY_LEN,
};
use coevo_core::CoevoError;
use serde::{Deserialize, Serialize};

use crate::config::{PairSpec, PredictorSet};

/// Segments of one group of the event log.
#[derive(Debug, Clone)]
pub struct GroupSegments {
    pub group: Option<String>,
    pub segments: Vec<Segment>,
}

impl GroupSegments {
    pub fn graphs(&self, include_isolated: bool) -> Vec<SegmentGraph> {
        self.segments
            .iter()
            .map(|s| build_segment_graph(s, include_isolated))
            .collect()
    }

    pub fn index(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.index).collect()
    }

    /// Drops a trailing partial segment unless asked to keep it.
    pub fn complete_only(mut self, keep_partial: bool) -> Self {
        if !keep_partial {
            self.segments.retain(|s| !s.partial);
        }
        self
    }
}

/// Splits events by group label, preserving event order within a group.
/// Groups come back sorted by label, unlabelled events first.
pub fn split_by_group(events: Vec<EventRecord>) -> Vec<(Option<String>, Vec<EventRecord>)> {
    let mut by: BTreeMap<Option<String>, Vec<EventRecord>> = BTreeMap::new();
    for e in events {
        by.entry(e.group.clone()).or_default().push(e);
    }
    by.into_iter().collect()
}

pub fn segment_groups(events: Vec<EventRecord>, size: usize) -> Result<Vec<GroupSegments>> {
    split_by_group(events)
        .into_iter()
        .map(|(group, evs)| {
            Ok(GroupSegments {
                segments: segment_by_actions(&evs, size)?,
                group,
            })
        })
        .collect()
}

/// Index of a grouped segment directory: group label and subdirectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDir {
    pub group: String,
    pub dir: String,
}

pub const GROUPS_FILE: &str = "groups.json";

/// Reads a segment directory written by `ingest`: either one segment set or
/// a `groups.json` index of per-group subdirectories.
pub fn load_segment_groups(dir: &Path) -> Result<(Vec<GroupSegments>, SegmentManifest)> {
    let single = dir.join(SEGMENT_MANIFEST);
    if single.exists() {
        let (m, segments) =
            read_segment_dir(dir).with_context(|| format!("read segments from {}", dir.display()))?;
        return Ok((
            vec![GroupSegments {
                group: None,
                segments,
            }],
            m,
        ));
    }
    let index_path = dir.join(GROUPS_FILE);
    let text = fs::read_to_string(&index_path).with_context(|| {
        format!(
            "{} holds neither {SEGMENT_MANIFEST} nor {GROUPS_FILE}",
            dir.display()
        )
    })?;
    let index: Vec<GroupDir> = serde_json::from_str(&text).map_err(CoevoError::from)?;
    let mut out = Vec::new();
    let mut first: Option<SegmentManifest> = None;
    for g in index {
        let (m, segments) = read_segment_dir(&dir.join(&g.dir))
            .with_context(|| format!("read segments of group `{}`", g.group))?;
        first.get_or_insert(m);
        out.push(GroupSegments {
            group: Some(g.group),
            segments,
        });
    }
    let m = first.ok_or_else(|| CoevoError::invalid(format!("{} lists no groups", index_path.display())))?;
    Ok((out, m))
}

/// Per-segment network metrics (plus first differences of the
/// single-segment metrics when asked) and the edge-repeat curve.
pub fn net_stage(
    group: &GroupSegments,
    graphs: &[SegmentGraph],
    cfg: &ConductanceConfig,
    max_lag: usize,
    differences: bool,
) -> Result<(MetricSeries, Vec<RepeatPoint>)> {
    let rows = segment_metrics(graphs, cfg);
    let mut table = net_series(group.index(), &rows);
    table.group = group.group.clone();
    if differences {
        table.add_differences(&STANDARD_COLUMNS)?;
    }
    // Short logs cannot support the requested lag range; report what exists.
    let lag = max_lag.min(graphs.len().saturating_sub(1));
    let curve = if lag >= 1 {
        edge_repeat_curve(graphs, lag)?
    } else {
        Vec::new()
    };
    Ok((table, curve))
}

pub fn content_stage(
    group: &GroupSegments,
    graphs: &[SegmentGraph],
    kind: PayloadKind,
    cfg: &ContentConfig,
) -> Result<MetricSeries> {
    let rows = content_metrics(&group.segments, graphs, kind, cfg)?;
    let mut table = content_series(group.index(), &rows, kind);
    table.group = group.group.clone();
    Ok(table)
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
}

pub fn repeat_curve_csv(curves: &[(Option<String>, Vec<RepeatPoint>)]) -> Result<Vec<u8>> {
    let grouped = curves.iter().any(|(g, _)| g.is_some());
    let mut header = Vec::new();
    if grouped {
        header.push("group");
    }
    header.extend(["lag", "probability"]);
    let mut rows = Vec::new();
    for (g, curve) in curves {
        for p in curve {
            let mut r = Vec::new();
            if grouped {
                r.push(g.clone().unwrap_or_default());
            }
            r.push(p.lag.to_string());
            r.push(fmt_opt(p.probability));
            rows.push(r);
        }
    }
    csv_bytes(&header, rows)
}

pub fn tables_csv(tables: &[MetricSeries]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    coevo_core::series::write_tables(tables, &mut buf)?;
    Ok(buf)
}

/// Loads metric tables from CSV files or directories of CSV files and merges
/// them column-wise by group. Files in a directory that do not look like
/// metric tables are skipped.
pub fn load_tables(paths: &[PathBuf]) -> Result<Vec<MetricSeries>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            entries.sort();
            for f in entries {
                let text = fs::read_to_string(&f).with_context(|| format!("read {}", f.display()))?;
                if is_table_header(text.lines().next().unwrap_or("")) {
                    files.push((f, text));
                }
            }
        } else {
            let text = fs::read_to_string(p).with_context(|| format!("read {}", p.display()))?;
            files.push((p.clone(), text));
        }
    }
    if files.is_empty() {
        return Err(CoevoError::invalid("no metric tables found").into());
    }
    let mut tables = Vec::new();
    for (f, text) in files {
        tables.extend(read_tables(text.as_bytes()).with_context(|| format!("parse {}", f.display()))?);
    }
    Ok(merge_by_group(tables)?)
}

#[derive(Debug, Clone)]
pub struct StationarityRow {
    pub group: Option<String>,
    pub column: String,
    pub test: &'static str,
    pub n: usize,
    pub result: Option<StationarityResult>,
    pub status: &'static str,
}

/// ADF and PP on every column of every table, over the non-missing values.
pub fn stationarity_rows(tables: &[MetricSeries]) -> Vec<StationarityRow> {
    let mut out = Vec::new();
    for t in tables {
        for name in t.column_names() {
            let ys: Vec<f64> = t.column(name).unwrap_or(&[]).iter().flatten().copied().collect();
            for (test, f) in [
                (
                    "adf",
                    adf_test as fn(&[f64]) -> coevo_core::Result<StationarityResult>,
                ),
                ("pp", pp_test),
            ] {
                let (result, status) = if ys.len() < MIN_STATIONARITY_LEN {
                    (None, "too_short")
                } else {
                    match f(&ys) {
                        Ok(r) if r.degenerate => (Some(r), "degenerate"),
                        Ok(r) => (Some(r), "ok"),
                        Err(_) => (None, "failed"),
                    }
                };
                out.push(StationarityRow {
                    group: t.group.clone(),
                    column: name.to_owned(),
                    test,
                    n: ys.len(),
                    result,
                    status,
                });
            }
        }
    }
    out
}

pub fn stationarity_csv(rows: &[StationarityRow]) -> Result<Vec<u8>> {
    let header = [
        "group",
        "column",
        "test",
        "n",
        "statistic",
        "lag_or_bandwidth",
        "p_band",
        "reject_unit_root",
        "degenerate",
        "status",
    ];
    let body = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.group.clone().unwrap_or_default(),
                r.column.clone(),
                r.test.to_owned(),
                r.n.to_string(),
            ];
            match &r.result {
                Some(s) => v.extend([
                    fmt_f64(s.statistic),
                    s.lag_or_bandwidth.to_string(),
                    s.p_band.label().to_owned(),
                    s.reject_unit_root.to_string(),
                    s.degenerate.to_string(),
                ]),
                None => v.extend(std::iter::repeat_n(String::new(), 5)),
            }
            v.push(r.status.to_owned());
            v
        })
        .collect();
    csv_bytes(&header, body)
}

pub fn is_net_column(name: &str) -> bool {
    NET_COLUMNS.contains(&name) || name.starts_with("d_")
}

pub fn is_content_column(name: &str) -> bool {
    [PayloadKind::Numeric, PayloadKind::Asset, PayloadKind::Tokens]
        .iter()
        .any(|k| content_columns(*k).contains(&name))
}

/// Columns present in every table, in the order of the first.
pub fn common_columns(tables: &[MetricSeries]) -> Vec<String> {
    let Some(first) = tables.first() else {
        return Vec::new();
    };
    first
        .column_names()
        .into_iter()
        .filter(|n| tables.iter().all(|t| t.column(n).is_some()))
        .map(str::to_owned)
        .collect()
}

pub fn resolve_pairs(spec: &PairSpec, tables: &[MetricSeries]) -> Result<Vec<(String, String)>> {
    let cols = common_columns(tables);
    let pairs: Vec<(String, String)> = match spec {
        PairSpec::Named(n) if n == "all" => {
            let mut v = Vec::new();
            for i in 0..cols.len() {
                for j in i + 1..cols.len() {
                    v.push((cols[i].clone(), cols[j].clone()));
                }
            }
            v
        }
        PairSpec::Named(n) if n == "cross" => {
            let net: Vec<&String> = cols.iter().filter(|c| is_net_column(c)).collect();
            let content: Vec<&String> = cols.iter().filter(|c| is_content_column(c)).collect();
            net.iter()
                .flat_map(|a| content.iter().map(move |b| ((*a).clone(), (*b).clone())))
                .collect()
        }
        PairSpec::Named(n) => {
            return Err(CoevoError::config(format!("unknown pair set `{n}`")).into());
        }
        PairSpec::List(list) => {
            for [a, b] in list {
                for c in [a, b] {
                    if !cols.contains(c) {
                        return Err(CoevoError::invalid(format!(
                            "column `{c}` is missing from at least one group"
                        ))
                        .into());
                    }
                }
            }
            list.iter().map(|[a, b]| (a.clone(), b.clone())).collect()
        }
    };
    if pairs.is_empty() {
        return Err(CoevoError::invalid("no variable pairs to correlate").into());
    }
    Ok(pairs)
}

/// Reads a pair file: two comma-separated column names per line, with an
/// optional `var_a,var_b` header.
pub fn read_pair_file(path: &Path) -> Result<PairSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    let mut list = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "var_a,var_b") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
            return Err(CoevoError::Parse {
                line: i + 1,
                message: "expected two column names".into(),
            }
            .into());
        }
        list.push([parts[0].to_owned(), parts[1].to_owned()]);
    }
    Ok(PairSpec::List(list))
}

pub fn screening(level: Option<f64>) -> Screening {
    level.map_or(Screening::None, Screening::BothTests)
}

pub fn correlate(tables: &[MetricSeries], spec: &PairSpec, level: Option<f64>) -> Result<CorrelationReport> {
    let pairs = resolve_pairs(spec, tables)?;
    Ok(correlate_groups(tables, &pairs, screening(level))?)
}

pub fn heatmap_csv(report: &CorrelationReport) -> Result<Vec<u8>> {
    let rows = report
        .entries
        .iter()
        .map(|e| {
            vec![
                e.var_a.clone(),
                e.var_b.clone(),
                fmt_f64(e.mean_rho),
                fmt_f64(e.combined_p),
                e.stars.to_owned(),
                e.groups.len().to_string(),
            ]
        })
        .collect();
    csv_bytes(
        &["var_a", "var_b", "mean_rho", "combined_p", "stars", "n_groups"],
        rows,
    )
}

/// Default orderings for a table: network predictors, content predictors,
/// and both concatenations. `msg_distance_sum` is left out as a rescaled
/// copy of `msg_distance`, and so are columns missing in more than half the
/// rows (such as `sim_disconnected` on a mostly connected network), which
/// would otherwise shrink the complete-case sample.
pub fn default_orderings(table: &MetricSeries, target: &str, set: PredictorSet) -> Result<Vec<Ordering>> {
    let names: Vec<&str> = table
        .column_names()
        .into_iter()
        .filter(|n| {
            table
                .column(n)
                .is_some_and(|c| 2 * c.iter().filter(|v| v.is_some()).count() >= c.len())
        })
        .collect();
    let net: Vec<String> = names
        .iter()
        .filter(|n| **n != target && is_net_column(n))
        .map(|n| n.to_string())
        .collect();
    let content: Vec<String> = names
        .iter()
        .filter(|n| **n != target && **n != "msg_distance_sum" && is_content_column(n))
        .map(|n| n.to_string())
        .collect();
    let ord = |name: &str, predictors: Vec<String>| Ordering {
        name: name.to_owned(),
        predictors,
    };
    let mut out = Vec::new();
    if matches!(set, PredictorSet::Net | PredictorSet::All) && !net.is_empty() {
        out.push(ord("network", net.clone()));
    }
    if matches!(set, PredictorSet::Content | PredictorSet::All) && !content.is_empty() {
        out.push(ord("content", content.clone()));
    }
    if set == PredictorSet::All && !net.is_empty() && !content.is_empty() {
        out.push(ord("network+content", [net.clone(), content.clone()].concat()));
        out.push(ord("content+network", [content, net].concat()));
    }
    if out.is_empty() {
        return Err(CoevoError::invalid("no predictor columns for the requested set").into());
    }
    Ok(out)
}

pub fn regress_tables(
    tables: &[MetricSeries],
    target: &str,
    orderings: Option<&[Ordering]>,
    set: PredictorSet,
    method: RegressionMethod,
) -> Result<Vec<(Option<String>, Vec<CurvePoint>)>> {
    tables
        .iter()
        .map(|t| {
            t.require(target)?;
            let ords = match orderings {
                Some(o) => o.to_vec(),
                None => default_orderings(t, target, set)?,
            };
            Ok((t.group.clone(), incremental_r2_curve(t, target, &ords, method)?))
        })
        .collect()
}

pub fn r2_curve_csv(curves: &[(Option<String>, Vec<CurvePoint>)]) -> Result<Vec<u8>> {
    let rows = curves
        .iter()
        .flat_map(|(g, pts)| {
            pts.iter().map(move |p| {
                vec![
                    g.clone().unwrap_or_default(),
                    p.ordering.clone(),
                    p.step.to_string(),
                    p.added.clone(),
                    fmt_opt(p.r2),
                    p.n.to_string(),
                    p.target_leak.to_string(),
                ]
            })
        })
        .collect();
    csv_bytes(
        &["group", "ordering", "step", "added", "r2", "n", "target_leak"],
        rows,
    )
}
