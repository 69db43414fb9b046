use serde::Serialize;

use super::engine::run_simulation;
use super::SimConfig;
use crate::contentmetrics::{content_metrics, content_series, ContentConfig};
use crate::error::{CoevoError, Result};
use crate::ingest::{build_segment_graph, segment_by_actions, EventRecord, PayloadKind};
use crate::netmetrics::{net_series, segment_metrics, ConductanceConfig};
use crate::series::MetricSeries;
use crate::stats::{fisher_mean, spearman, stouffer};

pub const SIM_SEGMENT_SIZE: usize = 100;

/// Per-segment metrics of one simulated log and their summaries.
#[derive(Debug, Clone)]
pub struct RunAnalysis {
    /// Structural and message columns, one row per segment.
    pub series: MetricSeries,
    pub mean_entropy: f64,
    pub mean_sd: f64,
    pub mean_jaccard: f64,
    pub mean_distance: f64,
    /// (rho, p) of Spearman correlations; `None` when undefined.
    pub jaccard_entropy: Option<(f64, f64)>,
    pub conductance_entropy: Option<(f64, f64)>,
    pub expectedness_novelty: Option<(f64, f64)>,
}

fn mean_of(col: &[Option<f64>]) -> f64 {
    let vals: Vec<f64> = col.iter().flatten().copied().collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

fn rank_corr(s: &MetricSeries, a: &str, b: &str) -> Result<Option<(f64, f64)>> {
    Ok(match spearman(s.require(a)?, s.require(b)?) {
        Ok(r) if !r.degenerate => Some((r.rho, r.p)),
        _ => None,
    })
}

/// Segments a numeric-payload log and computes the structural and message
/// metrics used to compare simulation conditions. A partial trailing segment
/// is left out. Novelty is the message distance to the previous segment.
pub fn analyze_log(events: &[EventRecord], segment_size: usize) -> Result<RunAnalysis> {
    let mut segments = segment_by_actions(events, segment_size)?;
    segments.retain(|s| !s.partial);
    let graphs: Vec<_> = segments.iter().map(|s| build_segment_graph(s, false)).collect();
    let index: Vec<usize> = segments.iter().map(|s| s.index).collect();
    let net = segment_metrics(&graphs, &ConductanceConfig::default());
    let content = content_metrics(
        &segments,
        &graphs,
        PayloadKind::Numeric,
        &ContentConfig::default(),
    )?;
    let mut series = net_series(index.clone(), &net);
    series.merge(&content_series(index, &content, PayloadKind::Numeric))?;

    Ok(RunAnalysis {
        mean_entropy: mean_of(series.require("msg_entropy")?),
        mean_sd: mean_of(series.require("msg_sd")?),
        mean_jaccard: mean_of(series.require("msg_jaccard")?),
        mean_distance: mean_of(series.require("msg_distance")?),
        jaccard_entropy: rank_corr(&series, "msg_jaccard", "msg_entropy")?,
        conductance_entropy: rank_corr(&series, "conductance", "msg_entropy")?,
        expectedness_novelty: rank_corr(&series, "expectedness", "msg_distance")?,
        series,
    })
}

/// A correlation aggregated over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CombinedCorrelation {
    pub mean_rho: f64,
    pub combined_p: f64,
    pub n_runs: usize,
}

fn combine(pairs: impl Iterator<Item = Option<(f64, f64)>>) -> Option<CombinedCorrelation> {
    let v: Vec<(f64, f64)> = pairs.flatten().collect();
    if v.is_empty() {
        return None;
    }
    let rhos: Vec<f64> = v.iter().map(|p| p.0).collect();
    Some(CombinedCorrelation {
        mean_rho: fisher_mean(&rhos),
        combined_p: stouffer(&v),
        n_runs: v.len(),
    })
}

/// Averages of one condition over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub topic_enabled: bool,
    pub mean_entropy: f64,
    pub mean_sd: f64,
    pub mean_jaccard: f64,
    pub mean_distance: f64,
    pub jaccard_entropy: Option<CombinedCorrelation>,
    pub conductance_entropy: Option<CombinedCorrelation>,
    pub expectedness_novelty: Option<CombinedCorrelation>,
}

impl ConditionSummary {
    fn from_runs(topic_enabled: bool, runs: &[RunAnalysis]) -> Self {
        let avg = |f: fn(&RunAnalysis) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
        ConditionSummary {
            topic_enabled,
            mean_entropy: avg(|r| r.mean_entropy),
            mean_sd: avg(|r| r.mean_sd),
            mean_jaccard: avg(|r| r.mean_jaccard),
            mean_distance: avg(|r| r.mean_distance),
            jaccard_entropy: combine(runs.iter().map(|r| r.jaccard_entropy)),
            conductance_entropy: combine(runs.iter().map(|r| r.conductance_entropy)),
            expectedness_novelty: combine(runs.iter().map(|r| r.expectedness_novelty)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopicalityReport {
    pub seeds: Vec<u64>,
    pub without: Vec<RunAnalysis>,
    pub with: Vec<RunAnalysis>,
    pub summary_without: ConditionSummary,
    pub summary_with: ConditionSummary,
}

impl TopicalityReport {
    /// Seeds for which `f(with) < f(without)`.
    pub fn pairs_lower_with_topics(&self, f: fn(&RunAnalysis) -> f64) -> usize {
        self.with
            .iter()
            .zip(&self.without)
            .filter(|(w, o)| f(w) < f(o))
            .count()
    }
}

/// Paired runs with topics off and on for seeds `cfg.seed .. cfg.seed + n_seeds`.
/// Both runs of a pair share the seed, hence the same network.
pub fn compare_topicality(cfg: &SimConfig, n_seeds: usize) -> Result<TopicalityReport> {
    if n_seeds == 0 {
        return Err(CoevoError::invalid("n_seeds must be at least 1"));
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|k| cfg.seed + k).collect();
    let mut without = Vec::with_capacity(n_seeds);
    let mut with = Vec::with_capacity(n_seeds);
    for &seed in &seeds {
        for (topic_enabled, sink) in [(false, &mut without), (true, &mut with)] {
            let run_cfg = SimConfig {
                seed,
                topic_enabled,
                ..cfg.clone()
            };
            let out = run_simulation(&run_cfg)?;
            let mut a = analyze_log(&out.events, SIM_SEGMENT_SIZE)?;
            a.series.group = Some(format!(
                "seed{seed}_{}",
                if topic_enabled { "topic" } else { "notopic" }
            ));
            sink.push(a);
        }
    }
    Ok(TopicalityReport {
        summary_without: ConditionSummary::from_runs(false, &without),
        summary_with: ConditionSummary::from_runs(true, &with),
        seeds,
        without,
        with,
    })
}
