use coevo_core::ingest::Payload;
use coevo_core::sim::{analyze_log, run_simulation, SimConfig};
use proptest::prelude::*;

fn small(seed: u64) -> SimConfig {
    SimConfig {
        n_nodes: 30,
        n_edges: 150,
        total_messages: 2_000,
        seed,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn emitted_events_follow_existing_edges(seed in 0u64..10_000, topics in any::<bool>()) {
        let out = run_simulation(&SimConfig { topic_enabled: topics, ..small(seed) }).unwrap();
        prop_assert_eq!(out.events.len(), 2_000);
        for e in &out.events {
            let s: usize = e.actor[1..].parse().unwrap();
            prop_assert_eq!(e.targets.len(), 1);
            let t: usize = e.targets[0][1..].parse().unwrap();
            prop_assert!(out.network.has_edge(s, t));
            prop_assert!(matches!(e.payload, Payload::Numeric(v) if (1.0..=100.0).contains(&v)));
        }
    }

    #[test]
    fn zero_topic_weight_makes_topics_irrelevant(seed in 0u64..10_000) {
        let off = SimConfig { weight_topicality: 0.0, ..small(seed) };
        let on = SimConfig { topic_enabled: true, ..off.clone() };
        prop_assert_eq!(run_simulation(&off).unwrap().events, run_simulation(&on).unwrap().events);
    }

    #[test]
    fn segment_entropy_is_bounded(seed in 0u64..10_000, size in 20usize..150) {
        let out = run_simulation(&small(seed)).unwrap();
        let a = analyze_log(&out.events, size).unwrap();
        let bound = (size.min(100) as f64).log2() + 1e-12;
        for h in a.series.require("msg_entropy").unwrap().iter().flatten() {
            prop_assert!(*h >= 0.0 && *h <= bound, "entropy {h} above {bound}");
        }
    }
}

#[test]
fn higher_threshold_forwards_less() {
    let rate = |theta: f64| {
        (0..10)
            .map(|seed| {
                let cfg = SimConfig {
                    send_threshold: theta,
                    ..small(seed)
                };
                run_simulation(&cfg).unwrap().stats.forwarding_rate()
            })
            .sum::<f64>()
            / 10.0
    };
    let rates: Vec<f64> = [0.3, 0.5, 0.7, 0.9].iter().map(|&t| rate(t)).collect();
    assert!(rates.windows(2).all(|w| w[0] >= w[1]), "{rates:?}");
}
