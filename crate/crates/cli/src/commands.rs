use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use coevo_core::contentmetrics::{ContentConfig, TextUnit, TFIDF_WEIGHTING};
use coevo_core::ingest::{
    parse_events, write_jsonl, write_segment_dir, LogFormat, ParseOptions, ParsedLog, PayloadKind,
    SegmentManifest,
};
use coevo_core::netmetrics::ConductanceConfig;
use coevo_core::series::{fmt_f64, MetricSeries};
use coevo_core::sim::{compare_topicality, run_simulation, RunAnalysis, SimConfig, SIM_SEGMENT_SIZE};
use coevo_core::stats::{Ordering, RegressionMethod, UNIT_ROOT_SPEC};
use coevo_core::CoevoError;
use serde_json::{json, Value};

use crate::analysis::{self, GroupDir, GroupSegments, GROUPS_FILE};
use crate::config::{validate_screen_level, PairSpec, PipelineConfig, PredictorSet};
use crate::manifest::{path_digest, sidecar_name, split_out_path, OutputDir, RunManifest, MANIFEST_NAME};

/// Rounds every float in a JSON value to 9 significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            if let Some(r) = fmt_f64(x)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
            {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

fn json_bytes(mut v: Value) -> Vec<u8> {
    round_json(&mut v);
    let mut text = serde_json::to_string_pretty(&v).expect("json serializes");
    text.push('\n');
    text.into_bytes()
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("config serializes")
}

fn read_events(path: &Path, opts: &ParseOptions) -> Result<ParsedLog> {
    let f = fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    parse_events(std::io::BufReader::new(f), opts).with_context(|| format!("parse {}", path.display()))
}

fn add_dir_input(m: &mut RunManifest, dir: &Path) -> Result<()> {
    m.inputs.push(crate::manifest::FileDigest {
        path: dir.display().to_string(),
        sha256: path_digest(dir)?,
    });
    Ok(())
}

fn add_table_inputs(m: &mut RunManifest, paths: &[PathBuf]) -> Result<()> {
    for p in paths {
        if p.is_dir() {
            add_dir_input(m, p)?;
        } else {
            m.add_input(p)?;
        }
    }
    Ok(())
}

pub struct IngestArgs {
    pub input: PathBuf,
    pub format: LogFormat,
    pub segment_size: usize,
    pub payload: PayloadKind,
    pub include_isolated: bool,
    pub max_targets: usize,
    pub out: PathBuf,
}

/// Writes one segment directory, or one per group plus a `groups.json` index.
pub fn ingest(a: &IngestArgs) -> Result<()> {
    if a.segment_size == 0 {
        return Err(CoevoError::config("segment size must be at least 1").into());
    }
    let opts = ParseOptions {
        format: a.format,
        payload: a.payload,
        max_targets: a.max_targets,
    };
    let parsed = read_events(&a.input, &opts)?;
    let mut out = OutputDir::create(&a.out)?;
    let groups = analysis::segment_groups(parsed.events, a.segment_size)?;
    let grouped = groups.iter().any(|g| g.group.is_some());
    let mut index = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        let sub = if grouped {
            format!("group_{k:03}")
        } else {
            String::new()
        };
        let dir = if grouped {
            out.path_of(&sub)?
        } else {
            out.root().to_path_buf()
        };
        let manifest = SegmentManifest {
            segment_size: a.segment_size,
            payload: a.payload,
            include_isolated: a.include_isolated,
            n_segments: g.segments.len(),
            last_partial: g.segments.last().is_some_and(|s| s.partial),
            n_events: g.segments.iter().map(|s| s.events.len()).sum(),
            dropped_mass: parsed.dropped_mass,
            self_loops_removed: parsed.self_loops_removed,
        };
        write_segment_dir(&dir, &g.segments, &manifest)?;
        if grouped {
            index.push(GroupDir {
                group: g.group.clone().unwrap_or_default(),
                dir: sub,
            });
        }
    }
    if grouped {
        let mut text = serde_json::to_string_pretty(&index)?;
        text.push('\n');
        out.write(GROUPS_FILE, text.as_bytes())?;
    }
    let mut m = RunManifest::new(
        "ingest",
        json!({
            "input": a.input.display().to_string(),
            "format": a.format,
            "payload": a.payload,
            "segment_size": a.segment_size,
            "include_isolated": a.include_isolated,
            "max_targets": a.max_targets,
        }),
    );
    m.add_input(&a.input)?;
    out.record_tree()?;
    out.finish(m, MANIFEST_NAME)?;
    Ok(())
}

pub struct NetArgs {
    pub segments: PathBuf,
    pub conductance: ConductanceConfig,
    pub max_lag: usize,
    pub differences: bool,
    pub keep_partial: bool,
    pub out: PathBuf,
}

pub fn netmetrics(a: &NetArgs) -> Result<()> {
    a.conductance.validate()?;
    let (groups, seg_manifest) = analysis::load_segment_groups(&a.segments)?;
    let mut tables = Vec::new();
    let mut curves = Vec::new();
    for g in groups {
        let g = g.complete_only(a.keep_partial);
        let graphs = g.graphs(seg_manifest.include_isolated);
        let (t, c) = analysis::net_stage(&g, &graphs, &a.conductance, a.max_lag, a.differences)?;
        curves.push((g.group.clone(), c));
        tables.push(t);
    }
    let (dir, name) = split_out_path(&a.out)?;
    let mut out = OutputDir::create(&dir)?;
    out.write(&name, &analysis::tables_csv(&tables)?)?;
    out.write("repeat_curve.csv", &analysis::repeat_curve_csv(&curves)?)?;
    let mut m = RunManifest::new(
        "netmetrics",
        json!({
            "segments": a.segments.display().to_string(),
            "max_path_len": a.conductance.max_path_len,
            "prune_eps": a.conductance.prune_epsilon,
            "max_lag": a.max_lag,
            "differences": a.differences,
            "keep_partial": a.keep_partial,
            "include_isolated": seg_manifest.include_isolated,
        }),
    );
    add_dir_input(&mut m, &a.segments)?;
    out.finish(m, &sidecar_name(&name))?;
    Ok(())
}

pub struct ContentArgs {
    pub segments: PathBuf,
    pub payload: Option<PayloadKind>,
    pub config: ContentConfig,
    pub keep_partial: bool,
    pub out: PathBuf,
}

pub fn contentmetrics(a: &ContentArgs) -> Result<()> {
    let (groups, seg_manifest) = analysis::load_segment_groups(&a.segments)?;
    if let Some(p) = a.payload {
        if p != seg_manifest.payload {
            return Err(CoevoError::config(format!(
                "segments hold {} payloads, not {p}",
                seg_manifest.payload
            ))
            .into());
        }
    }
    let kind = seg_manifest.payload;
    let mut tables = Vec::new();
    for g in groups {
        let g = g.complete_only(a.keep_partial);
        let graphs = g.graphs(seg_manifest.include_isolated);
        tables.push(analysis::content_stage(&g, &graphs, kind, &a.config)?);
    }
    let (dir, name) = split_out_path(&a.out)?;
    let mut out = OutputDir::create(&dir)?;
    out.write(&name, &analysis::tables_csv(&tables)?)?;
    let mut m = RunManifest::new(
        "contentmetrics",
        json!({
            "segments": a.segments.display().to_string(),
            "payload": kind,
            "alpha": a.config.alpha,
            "strip_quotes": a.config.strip_quotes,
            "text_unit": a.config.text_unit,
            "keep_partial": a.keep_partial,
        }),
    );
    if kind == PayloadKind::Tokens {
        m = m.with_method("tfidf", TFIDF_WEIGHTING);
    }
    add_dir_input(&mut m, &a.segments)?;
    out.finish(m, &sidecar_name(&name))?;
    Ok(())
}

pub fn stationarity(metrics: &[PathBuf], out_path: &Path) -> Result<()> {
    let tables = analysis::load_tables(metrics)?;
    let rows = analysis::stationarity_rows(&tables);
    let (dir, name) = split_out_path(out_path)?;
    let mut out = OutputDir::create(&dir)?;
    out.write(&name, &analysis::stationarity_csv(&rows)?)?;
    let mut m = RunManifest::new("stationarity", json!({ "metrics": metrics }))
        .with_method("unit_root", UNIT_ROOT_SPEC);
    add_table_inputs(&mut m, metrics)?;
    out.finish(m, &sidecar_name(&name))?;
    Ok(())
}

/// `all`, `cross` or a pair file.
pub fn parse_pairs(arg: &str) -> Result<PairSpec> {
    match arg {
        "all" | "cross" => Ok(PairSpec::Named(arg.to_owned())),
        file => analysis::read_pair_file(Path::new(file)),
    }
}

/// `none` or one of the screening levels.
pub fn parse_screen(arg: &str) -> Result<Option<f64>> {
    if arg == "none" {
        return Ok(None);
    }
    let level: f64 = arg
        .parse()
        .map_err(|_| CoevoError::config(format!("bad screen level `{arg}`")))?;
    validate_screen_level(level)?;
    Ok(Some(level))
}

pub fn correlate(groups: &[PathBuf], pairs: &str, screen: &str, out_path: &Path) -> Result<()> {
    let spec = parse_pairs(pairs)?;
    let level = parse_screen(screen)?;
    let tables = analysis::load_tables(groups)?;
    let report = analysis::correlate(&tables, &spec, level)?;
    for (g, col) in &report.excluded_groups {
        eprintln!("excluded group `{g}`: `{col}` failed unit-root screening");
    }
    let (dir, name) = split_out_path(out_path)?;
    let mut out = OutputDir::create(&dir)?;
    out.write(&name, &analysis::heatmap_csv(&report)?)?;
    let mut m = RunManifest::new(
        "correlate",
        json!({
            "groups": groups,
            "pairs": spec,
            "screen_level": level,
            "combination": "fisher-z mean, signed stouffer",
        }),
    );
    add_table_inputs(&mut m, groups)?;
    if !matches!(pairs, "all" | "cross") {
        m.add_input(Path::new(pairs))?;
    }
    out.finish(m, &sidecar_name(&name))?;
    Ok(())
}

pub struct RegressArgs {
    pub series: Vec<PathBuf>,
    pub target: String,
    pub predictors: PredictorSet,
    pub method: RegressionMethod,
    pub orderings: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn regress(a: &RegressArgs) -> Result<()> {
    let orderings: Option<Vec<Ordering>> = match &a.orderings {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("read {}", p.display()))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CoevoError::config(format!("{}: {e}", p.display())))?,
            )
        }
        None => None,
    };
    let tables = analysis::load_tables(&a.series)?;
    let curves = analysis::regress_tables(&tables, &a.target, orderings.as_deref(), a.predictors, a.method)?;
    let (dir, name) = split_out_path(&a.out)?;
    let mut out = OutputDir::create(&dir)?;
    out.write(&name, &analysis::r2_curve_csv(&curves)?)?;
    let mut m = RunManifest::new(
        "regress",
        json!({
            "series": a.series,
            "target": a.target,
            "predictors": a.predictors,
            "method": a.method,
            "orderings": orderings,
        }),
    );
    add_table_inputs(&mut m, &a.series)?;
    if let Some(p) = &a.orderings {
        m.add_input(p)?;
    }
    out.finish(m, &sidecar_name(&name))?;
    Ok(())
}

pub fn load_sim_config(path: Option<&Path>) -> Result<SimConfig> {
    let Some(path) = path else {
        return Ok(SimConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CoevoError::config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CoevoError::config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| CoevoError::config(format!("{}: {e}", path.display())))?
    };
    Ok(cfg)
}

fn sim_config_from_manifest(m: &RunManifest) -> Result<SimConfig> {
    Ok(serde_json::from_value(m.config.clone())
        .map_err(|e| CoevoError::config(format!("manifest config: {e}")))?)
}

pub struct SimArgs {
    pub config: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub seed: Option<u64>,
    pub topic: Option<bool>,
    pub messages: Option<usize>,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
}

/// Resolves the simulation config from a manifest or a config file plus
/// flag overrides.
fn sim_config(a: &SimArgs, command: &str) -> Result<(SimConfig, Vec<String>)> {
    if let Some(mp) = &a.manifest {
        let m = RunManifest::load(mp)?;
        m.check_replay(command)?;
        return Ok((sim_config_from_manifest(&m)?, m.overrides));
    }
    let mut cfg = load_sim_config(a.config.as_deref())?;
    let mut overrides = Vec::new();
    if let Some(s) = a.seed {
        cfg.seed = s;
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = a.topic {
        cfg.topic_enabled = t;
        overrides.push(format!("topic_enabled={t}"));
    }
    if let Some(n) = a.messages {
        cfg.total_messages = n;
        overrides.push(format!("total_messages={n}"));
    }
    cfg.validate()?;
    Ok((cfg, overrides))
}

pub fn simulate(a: &SimArgs) -> Result<()> {
    let (cfg, overrides) = sim_config(a, "simulate")?;
    let run = run_simulation(&cfg)?;
    let mut events = Vec::new();
    write_jsonl(&run.events, &mut events)?;

    let (dir, name) = split_out_path(&a.out)?;
    let mut out = OutputDir::create(&dir)?;
    out.write(&name, &events)?;
    if let Some(r) = &a.report {
        let (rdir, rname) = split_out_path(r)?;
        if rdir != dir {
            return Err(CoevoError::invalid("--report must be in the same directory as --out").into());
        }
        let report = json!({
            "seed": cfg.seed,
            "topic_enabled": cfg.topic_enabled,
            "events": run.events.len(),
            "ticks": run.stats.ticks,
            "injected": run.stats.injected,
            "forwards": run.stats.forwards,
            "receptions": run.stats.receptions,
            "forwarding_rate": run.stats.forwarding_rate(),
            "topics": run.topics.topics.len(),
            "network": {
                "n_nodes": run.network.n_nodes,
                "n_edges": run.network.n_edges(),
                "reciprocity": run.network.reciprocity,
                "clustering": run.network.clustering,
                "hill_climb_iterations": run.network.iterations,
            },
        });
        out.write(&rname, &json_bytes(report))?;
    }
    let mut m = RunManifest::new("simulate", to_value(&cfg));
    m.overrides = overrides;
    m.seeds = vec![cfg.seed];
    out.finish(m, &sidecar_name(&name))?;
    Ok(())
}

fn run_json(seed: u64, topic: bool, r: &RunAnalysis) -> Value {
    json!({
        "seed": seed,
        "topic_enabled": topic,
        "segments": r.series.len(),
        "mean_entropy": r.mean_entropy,
        "mean_sd": r.mean_sd,
        "mean_jaccard": r.mean_jaccard,
        "mean_distance": r.mean_distance,
        "jaccard_entropy": r.jaccard_entropy,
        "conductance_entropy": r.conductance_entropy,
        "expectedness_novelty": r.expectedness_novelty,
    })
}

pub struct CompareArgs {
    pub sim: SimArgs,
    pub seeds: Option<usize>,
}

/// Paired runs with and without topics; writes `summary.json`, the grouped
/// per-segment series and a manifest into the output directory.
pub fn simulate_compare(a: &CompareArgs) -> Result<()> {
    let (cfg, mut overrides) = sim_config(&a.sim, "simulate compare")?;
    let n_seeds = match (&a.sim.manifest, a.seeds) {
        (Some(mp), _) => RunManifest::load(mp)?.seeds.len(),
        (None, Some(k)) => {
            overrides.push(format!("seeds={k}"));
            k
        }
        (None, None) => 10,
    };
    let report = compare_topicality(&cfg, n_seeds)?;
    let mut out = OutputDir::create(&a.sim.out)?;
    let mut runs = Vec::new();
    for (k, &seed) in report.seeds.iter().enumerate() {
        runs.push(run_json(seed, false, &report.without[k]));
        runs.push(run_json(seed, true, &report.with[k]));
    }
    let summary = json!({
        "segment_size": SIM_SEGMENT_SIZE,
        "seeds": report.seeds,
        "without_topics": report.summary_without,
        "with_topics": report.summary_with,
        "pairs_lower_entropy_with_topics": report.pairs_lower_with_topics(|r| r.mean_entropy),
        "pairs_lower_sd_with_topics": report.pairs_lower_with_topics(|r| r.mean_sd),
        "runs": runs,
    });
    out.write("summary.json", &json_bytes(summary))?;
    let tables: Vec<MetricSeries> = report
        .without
        .iter()
        .zip(&report.with)
        .flat_map(|(o, w)| [o.series.clone(), w.series.clone()])
        .collect();
    out.write("series.csv", &analysis::tables_csv(&tables)?)?;
    let mut m = RunManifest::new("simulate compare", to_value(&cfg));
    m.overrides = overrides;
    m.seeds = report.seeds.clone();
    out.finish(m, MANIFEST_NAME)?;
    Ok(())
}

/// Flag overrides for `pipeline`, applied over the configuration file.
#[derive(Debug, Default)]
pub struct PipelineOverrides {
    pub input: Option<PathBuf>,
    pub payload: Option<PayloadKind>,
    pub segment_size: Option<usize>,
    pub max_path_len: Option<usize>,
    pub prune_eps: Option<f64>,
    pub max_lag: Option<usize>,
    pub screen: Option<String>,
    pub target: Option<String>,
    pub method: Option<RegressionMethod>,
    pub text_unit: Option<TextUnit>,
}

impl PipelineOverrides {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<Vec<String>> {
        let mut log = Vec::new();
        if let Some(p) = &self.input {
            let abs = std::path::absolute(p)?;
            log.push(format!("input.path={}", abs.display()));
            cfg.input.path = Some(abs);
        }
        if let Some(p) = self.payload {
            cfg.input.payload = Some(p);
            log.push(format!("input.payload={p}"));
        }
        if let Some(n) = self.segment_size {
            cfg.segment.size = n;
            log.push(format!("segment.size={n}"));
        }
        if let Some(l) = self.max_path_len {
            cfg.netmetrics.max_path_len = l;
            log.push(format!("netmetrics.max_path_len={l}"));
        }
        if let Some(e) = self.prune_eps {
            cfg.netmetrics.prune_eps = e;
            log.push(format!("netmetrics.prune_eps={e}"));
        }
        if let Some(k) = self.max_lag {
            cfg.netmetrics.max_lag = k;
            log.push(format!("netmetrics.max_lag={k}"));
        }
        if let Some(s) = &self.screen {
            cfg.correlate.screen_level = parse_screen(s)?;
            log.push(format!("correlate.screen_level={s}"));
        }
        if let Some(t) = &self.target {
            cfg.regress.target = Some(t.clone());
            log.push(format!("regress.target={t}"));
        }
        if let Some(m) = self.method {
            cfg.regress.method = m;
            log.push(format!("regress.method={}", to_value(&m).as_str().unwrap_or("")));
        }
        if let Some(u) = self.text_unit {
            cfg.content.text_unit = u;
            log.push(format!(
                "content.text_unit={}",
                to_value(&u).as_str().unwrap_or("")
            ));
        }
        Ok(log)
    }
}

pub struct PipelineArgs {
    pub config: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub overrides: PipelineOverrides,
    pub out: PathBuf,
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().with_context(|| format!("stage `{name}` failed"))
}

/// Resolves and validates the configuration before any work is done.
pub fn pipeline_config(a: &PipelineArgs) -> Result<(PipelineConfig, Vec<String>)> {
    if let Some(mp) = &a.manifest {
        let m = RunManifest::load(mp)?;
        m.check_replay("pipeline")?;
        let cfg: PipelineConfig = serde_json::from_value(m.config.clone())
            .map_err(|e| CoevoError::config(format!("manifest config: {e}")))?;
        cfg.validate()?;
        return Ok((cfg, m.overrides));
    }
    let path = a
        .config
        .as_deref()
        .ok_or_else(|| CoevoError::config("pipeline needs --config or --manifest"))?;
    let mut cfg = PipelineConfig::load(path)?;
    let base = std::path::absolute(path)?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let overrides = a.overrides.apply(&mut cfg)?;
    cfg.resolve(&base);
    cfg.validate()?;
    Ok((cfg, overrides))
}

pub fn pipeline(a: &PipelineArgs) -> Result<()> {
    let (cfg, overrides) = pipeline_config(a)?;
    let input = cfg.input.path.clone().expect("validated");
    let kind = cfg.input.payload.expect("validated");
    let target = cfg.regress.target.clone().expect("resolved");
    let conductance = cfg.netmetrics.conductance()?;

    let groups: Vec<GroupSegments> = stage("ingest", || {
        let opts = ParseOptions {
            format: cfg.input.format,
            payload: kind,
            max_targets: cfg.input.max_targets,
        };
        let parsed = read_events(&input, &opts)?;
        Ok(analysis::segment_groups(parsed.events, cfg.segment.size)?
            .into_iter()
            .map(|g| g.complete_only(cfg.segment.keep_partial))
            .collect())
    })?;
    let graphs: Vec<_> = groups
        .iter()
        .map(|g| g.graphs(cfg.segment.include_isolated))
        .collect();

    let mut out = OutputDir::create(&a.out)?;
    let (net_tables, curves) = stage("netmetrics", || {
        let mut tables = Vec::new();
        let mut curves = Vec::new();
        for (g, gr) in groups.iter().zip(&graphs) {
            let (t, c) = analysis::net_stage(
                g,
                gr,
                &conductance,
                cfg.netmetrics.max_lag,
                cfg.netmetrics.differences,
            )?;
            tables.push(t);
            curves.push((g.group.clone(), c));
        }
        Ok((tables, curves))
    })?;
    out.write("metrics.csv", &analysis::tables_csv(&net_tables)?)?;
    out.write("repeat_curve.csv", &analysis::repeat_curve_csv(&curves)?)?;

    let content_tables = stage("contentmetrics", || {
        groups
            .iter()
            .zip(&graphs)
            .map(|(g, gr)| analysis::content_stage(g, gr, kind, &cfg.content.to_core()))
            .collect::<Result<Vec<_>>>()
    })?;
    out.write("content.csv", &analysis::tables_csv(&content_tables)?)?;

    let mut merged = net_tables;
    for (m, c) in merged.iter_mut().zip(&content_tables) {
        m.merge(c)?;
    }

    let rows = stage("stationarity", || Ok(analysis::stationarity_rows(&merged)))?;
    out.write("stationarity.csv", &analysis::stationarity_csv(&rows)?)?;

    let report = stage("correlate", || {
        analysis::correlate(&merged, &cfg.correlate.pairs, cfg.correlate.screen_level)
    })?;
    out.write("heatmap.csv", &analysis::heatmap_csv(&report)?)?;

    let curves = stage("regress", || {
        analysis::regress_tables(&merged, &target, None, cfg.regress.predictors, cfg.regress.method)
    })?;
    out.write("r2_curve.csv", &analysis::r2_curve_csv(&curves)?)?;

    let mut m = RunManifest::new("pipeline", to_value(&cfg)).with_method("unit_root", UNIT_ROOT_SPEC);
    if cfg.input.payload == Some(PayloadKind::Tokens) {
        m = m.with_method("tfidf", TFIDF_WEIGHTING);
    }
    m.overrides = overrides;
    m.add_input(&input)?;
    out.finish(m, MANIFEST_NAME)?;
    Ok(())
}
