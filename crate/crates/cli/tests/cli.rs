use std::path::Path;
use std::process::{Command, Output};

fn coevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coevo"))
        .args(args)
        .output()
        .expect("run coevo")
}

fn ok(args: &[&str]) -> Output {
    let out = coevo(args);
    assert!(
        out.status.success(),
        "coevo {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn row_count(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn stage_by_stage_on_a_simulated_log() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let log = d.join("ev.jsonl");
    ok(&["simulate", "--seed", "3", "--messages", "4000", "--out", s(&log)]);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4000);

    let seg = d.join("seg");
    ok(&[
        "ingest",
        "--input",
        s(&log),
        "--payload",
        "numeric",
        "--out",
        s(&seg),
    ]);
    assert!(seg.join("manifest.json").exists());

    let net = d.join("net.csv");
    ok(&[
        "netmetrics",
        "--segments",
        s(&seg),
        "--max-lag",
        "10",
        "--out",
        s(&net),
    ]);
    let cols = header(&net);
    for c in ["conductance", "edge_jaccard", "expectedness", "d_n_edges"] {
        assert!(cols.iter().any(|h| h == c), "missing {c} in {cols:?}");
    }
    assert_eq!(row_count(&d.join("repeat_curve.csv")), 10);

    let content = d.join("content.csv");
    ok(&["contentmetrics", "--segments", s(&seg), "--out", s(&content)]);
    assert!(header(&content).iter().any(|h| h == "msg_entropy"));
    assert_eq!(row_count(&content), row_count(&net));

    let stat = d.join("stationarity.csv");
    ok(&[
        "stationarity",
        "--metrics",
        s(&net),
        s(&content),
        "--out",
        s(&stat),
    ]);
    assert!(row_count(&stat) > 0);

    let heat = d.join("heatmap.csv");
    ok(&["correlate", "--groups", s(&net), s(&content), "--out", s(&heat)]);
    assert_eq!(
        header(&heat),
        ["var_a", "var_b", "mean_rho", "combined_p", "stars", "n_groups"]
    );

    let curve = d.join("r2.csv");
    ok(&[
        "regress",
        "--series",
        s(&net),
        s(&content),
        "--target",
        "msg_entropy",
        "--method",
        "ols",
        "--out",
        s(&curve),
    ]);
    assert!(row_count(&curve) > 0);
}

#[test]
fn grouped_asset_log_correlates_per_group() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut csv = String::from("ts,actor,targets,doc,payload,group\n");
    for k in 0..600 {
        let group = if k % 2 == 0 { "east" } else { "west" };
        csv.push_str(&format!(
            "{k},u{},u{},d{k},item{},{group}\n",
            k % 7,
            (k * 3 + 1) % 7,
            (k * k) % 11
        ));
    }
    let log = d.join("ev.csv");
    std::fs::write(&log, csv).unwrap();
    let seg = d.join("seg");
    ok(&[
        "ingest",
        "--input",
        s(&log),
        "--format",
        "csv",
        "--payload",
        "asset",
        "--segment-size",
        "10",
        "--out",
        s(&seg),
    ]);
    assert!(seg.join("groups.json").exists());
    let net = d.join("net.csv");
    ok(&[
        "netmetrics",
        "--segments",
        s(&seg),
        "--max-lag",
        "5",
        "--out",
        s(&net),
    ]);
    let content = d.join("content.csv");
    ok(&["contentmetrics", "--segments", s(&seg), "--out", s(&content)]);
    assert!(header(&net).first().is_some_and(|h| h == "group"));
    let heat = d.join("heatmap.csv");
    ok(&[
        "correlate",
        "--groups",
        s(&net),
        s(&content),
        "--pairs",
        "all",
        "--out",
        s(&heat),
    ]);
    let mut r = csv::Reader::from_path(&heat).unwrap();
    let n_groups: Vec<String> = r.records().map(|rec| rec.unwrap()[5].to_owned()).collect();
    assert!(!n_groups.is_empty());
    assert!(n_groups.iter().any(|n| n == "2"));
}

#[test]
fn pipeline_replays_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&[
        "simulate",
        "--seed",
        "5",
        "--messages",
        "5000",
        "--out",
        s(&d.join("ev.jsonl")),
    ]);
    std::fs::write(
        d.join("run.toml"),
        "[input]\npath = \"ev.jsonl\"\npayload = \"numeric\"\n[netmetrics]\nmax_lag = 10\n",
    )
    .unwrap();
    let first = d.join("first");
    ok(&["pipeline", "--config", s(&d.join("run.toml")), "--out", s(&first)]);
    let second = d.join("second");
    ok(&[
        "pipeline",
        "--manifest",
        s(&first.join("manifest.json")),
        "--out",
        s(&second),
    ]);
    for name in [
        "metrics.csv",
        "content.csv",
        "repeat_curve.csv",
        "stationarity.csv",
        "heatmap.csv",
        "r2_curve.csv",
        "manifest.json",
    ] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn simulation_replays_from_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let a = d.join("a.jsonl");
    ok(&[
        "simulate",
        "--seed",
        "8",
        "--topic",
        "true",
        "--messages",
        "2000",
        "--out",
        s(&a),
    ]);
    let b = d.join("b.jsonl");
    ok(&[
        "simulate",
        "--manifest",
        s(&d.join("a.manifest.json")),
        "--out",
        s(&b),
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let bad = d.join("bad.toml");
    std::fs::write(
        &bad,
        "[input]\npath = \"ev.jsonl\"\npayload = \"numeric\"\n[segment]\nsize = 0\n",
    )
    .unwrap();
    let out = coevo(&["pipeline", "--config", s(&bad), "--out", s(&d.join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("o").exists());

    let unknown = d.join("unknown.toml");
    std::fs::write(&unknown, "[segment]\nwidth = 5\n").unwrap();
    let out = coevo(&["pipeline", "--config", s(&unknown), "--out", s(&d.join("o"))]);
    assert_eq!(out.status.code(), Some(2));

    let missing = d.join("missing.toml");
    std::fs::write(
        &missing,
        "[input]\npath = \"nowhere.jsonl\"\npayload = \"numeric\"\n",
    )
    .unwrap();
    let out = coevo(&["pipeline", "--config", s(&missing), "--out", s(&d.join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));

    let garbled = d.join("g.jsonl");
    std::fs::write(&garbled, "{not json\n").unwrap();
    let out = coevo(&[
        "ingest",
        "--input",
        s(&garbled),
        "--payload",
        "numeric",
        "--out",
        s(&d.join("seg")),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let stuck = d.join("stuck.json");
    std::fs::write(&stuck, "{\"send_threshold\": 5.0, \"stall_ticks\": 500}\n").unwrap();
    let out = coevo(&[
        "simulate",
        "--config",
        s(&stuck),
        "--messages",
        "100",
        "--out",
        s(&d.join("x.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(4));

    assert_eq!(coevo(&["ingest"]).status.code(), Some(2));
}
