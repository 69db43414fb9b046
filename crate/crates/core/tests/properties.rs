use coevo_core::contentmetrics::entropy_bits;
use coevo_core::ingest::{
    parse_events, segment_by_actions, write_csv, write_jsonl, EventRecord, LogFormat, ParseOptions, Payload,
    PayloadKind, SegmentGraph,
};
use coevo_core::netmetrics::{gini, graph_conductance, pair_conductance, ConductanceConfig};
use coevo_core::stats::{nw_regress, ols_fit, spearman};
use proptest::prelude::*;

/// Weighted digraph on `n` nodes as `(from, to, weight)` triples.
fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize, u64)>)> {
    (2..=max_nodes).prop_flat_map(|n| {
        let edge = (0..n, 0..n, 1u64..6);
        (Just(n), prop::collection::vec(edge, 0..n * (n - 1)))
    })
}

fn build(n: usize, edges: &[(usize, usize, u64)]) -> SegmentGraph {
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    SegmentGraph::from_edges(
        names.clone(),
        edges
            .iter()
            .map(|&(a, b, w)| (names[a].clone(), names[b].clone(), w))
            .collect::<Vec<_>>(),
    )
}

/// Sum over every simple path from `i` to `j` of the product of
/// `w(k, l) / out_weight(k)`, by plain recursion over the edge list.
fn brute_force(g: &SegmentGraph, i: usize, j: usize) -> f64 {
    fn rec(g: &SegmentGraph, k: usize, j: usize, prob: f64, seen: &mut Vec<bool>) -> f64 {
        if k == j {
            return prob;
        }
        let total = g.out_weight(k) as f64;
        let mut acc = 0.0;
        for &(l, w) in g.out_edges(k) {
            if !seen[l] {
                seen[l] = true;
                acc += rec(g, l, j, prob * w as f64 / total, seen);
                seen[l] = false;
            }
        }
        acc
    }
    if i == j {
        return 0.0;
    }
    let mut seen = vec![false; g.n_nodes()];
    seen[i] = true;
    rec(g, i, j, 1.0, &mut seen)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn conductance_matches_path_enumeration((n, edges) in graph_strategy(8)) {
        let g = build(n, &edges);
        let cfg = ConductanceConfig::exhaustive();
        let mut total = 0.0;
        for i in 0..g.n_nodes() {
            for j in 0..g.n_nodes() {
                let expected = brute_force(&g, i, j);
                let got = pair_conductance(&g, g.node_id(i), g.node_id(j), &cfg);
                prop_assert!((got - expected).abs() <= 1e-9, "{i}->{j}: {got} vs {expected}");
                total += expected;
            }
        }
        prop_assert!((graph_conductance(&g, &cfg) - total).abs() <= 1e-9);
    }

    #[test]
    fn conductance_grows_with_path_length_and_smaller_epsilon(
        (n, edges) in graph_strategy(8),
        len in 1usize..6,
        eps_exp in 1i32..8,
    ) {
        let g = build(n, &edges);
        let eps = 10f64.powi(-eps_exp);
        let short = graph_conductance(&g, &ConductanceConfig::new(len, eps).unwrap());
        let long = graph_conductance(&g, &ConductanceConfig::new(len + 1, eps).unwrap());
        prop_assert!(short <= long + 1e-12);
        let coarse = graph_conductance(&g, &ConductanceConfig::new(len, eps * 10.0).unwrap());
        prop_assert!(coarse <= short + 1e-12);
    }

    #[test]
    fn gini_invariants(xs in prop::collection::vec(0.0f64..100.0, 1..40), scale in 0.1f64..50.0) {
        let g = gini(&xs);
        prop_assert!((0.0..1.0).contains(&g));
        let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        prop_assert!((gini(&scaled) - g).abs() < 1e-9);
        let mut rev = xs.clone();
        rev.reverse();
        prop_assert!((gini(&rev) - g).abs() < 1e-12);
        prop_assert!(gini(&vec![xs[0] + 1.0; xs.len()]).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_bounded(counts in prop::collection::vec(0usize..50, 1..30)) {
        let h = entropy_bits(counts.iter().copied());
        let support = counts.iter().filter(|&&c| c > 0).count();
        prop_assert!(h >= 0.0);
        if support > 0 {
            prop_assert!(h <= (support as f64).log2() + 1e-12);
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40),
    ) {
        let x: Vec<Option<f64>> = pairs.iter().map(|p| Some(p.0)).collect();
        let y: Vec<Option<f64>> = pairs.iter().map(|p| Some(p.1)).collect();
        let base = spearman(&x, &y).unwrap();
        let up: Vec<Option<f64>> = x.iter().map(|v| v.map(|v| (v / 10.0).exp() + v.powi(3))).collect();
        let down: Vec<Option<f64>> = x.iter().map(|v| v.map(|v| -v)).collect();
        let r_up = spearman(&up, &y).unwrap();
        let r_down = spearman(&down, &y).unwrap();
        prop_assert!((r_up.rho - base.rho).abs() < 1e-12);
        prop_assert!((r_down.rho + base.rho).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base.p));
    }

    #[test]
    fn ols_r2_is_affine_invariant(
        rows in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 8..40),
        a in 0.5f64..20.0,
        b in -100.0f64..100.0,
    ) {
        let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2 + 0.3 * r.0).collect();
        let Ok(base) = ols_fit(&[x1.clone(), x2.clone()], &y) else { return Ok(()); };
        let y2: Vec<f64> = y.iter().map(|v| -a * v + b).collect();
        let x1s: Vec<f64> = x1.iter().map(|v| a * v - b).collect();
        let moved = ols_fit(&[x1s, x2], &y2).unwrap();
        prop_assert!((moved.r2 - base.r2).abs() < 1e-8, "{} vs {}", moved.r2, base.r2);
    }

    #[test]
    fn infinite_bandwidth_predicts_the_mean(
        rows in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 10..40),
        q in -20.0f64..20.0,
    ) {
        let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let m = nw_regress(&[x], &y, Some(&[f64::INFINITY])).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let p = m.predict(&[q]);
        prop_assert!(!p.fallback);
        prop_assert!((p.value - mean).abs() < 1e-9);
    }
}

fn event_strategy() -> impl Strategy<Value = Vec<EventRecord>> {
    let one = (
        0i64..1000,
        0usize..6,
        prop::collection::btree_set(0usize..6, 0..4),
        0usize..15,
        1u32..=100,
        prop::option::of(0usize..3),
    );
    prop::collection::vec(one, 0..60).prop_map(|raw| {
        let mut events: Vec<EventRecord> = raw
            .into_iter()
            .map(|(ts, actor, targets, doc, value, group)| EventRecord {
                timestamp: ts,
                actor: format!("u{actor}"),
                targets: targets
                    .into_iter()
                    .filter(|&t| t != actor)
                    .map(|t| format!("u{t}"))
                    .collect(),
                doc_id: format!("d{doc}"),
                payload: Payload::Numeric(value as f64),
                group: group.map(|g| format!("g{g}")),
            })
            .collect();
        events.sort_by_key(|e| e.timestamp);
        events
    })
}

proptest! {
    #[test]
    fn event_logs_round_trip(events in event_strategy()) {
        let opts = |format| ParseOptions {
            format,
            payload: PayloadKind::Numeric,
            max_targets: usize::MAX,
        };
        let mut buf = Vec::new();
        write_jsonl(&events, &mut buf).unwrap();
        prop_assert_eq!(&parse_events(buf.as_slice(), &opts(LogFormat::Jsonl)).unwrap().events, &events);
        let mut buf = Vec::new();
        write_csv(&events, &mut buf).unwrap();
        prop_assert_eq!(&parse_events(buf.as_slice(), &opts(LogFormat::Csv)).unwrap().events, &events);
    }

    #[test]
    fn segments_hold_exactly_the_requested_documents(events in event_strategy(), size in 1usize..8) {
        let segments = segment_by_actions(&events, size).unwrap();
        let mut flat = Vec::new();
        for (k, s) in segments.iter().enumerate() {
            let docs: std::collections::HashSet<&str> =
                s.events.iter().map(|e| e.doc_id.as_str()).collect();
            prop_assert_eq!(docs.len(), s.action_count);
            prop_assert_eq!(s.index, k);
            if k + 1 < segments.len() {
                prop_assert_eq!(s.action_count, size);
                prop_assert!(!s.partial);
            } else {
                prop_assert_eq!(s.partial, s.action_count < size);
            }
            flat.extend(s.events.iter().cloned());
        }
        prop_assert_eq!(flat, events);
    }
}
