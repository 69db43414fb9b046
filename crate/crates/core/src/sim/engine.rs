use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::network::{generate_network, node_name, SimNetwork};
use super::policy::{forward_score, score_ceiling, NodeState};
use super::topics::{topic_schedule, TopicSchedule};
use super::{stream_rng, SimConfig, Stream};
use crate::error::{CoevoError, Result};
use crate::ingest::{EventRecord, Payload};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimStats {
    pub ticks: u64,
    pub injected: u64,
    /// Queue entries that received a send decision.
    pub forwards: u64,
    /// Distinct (node, message) receptions, exogenous ones included.
    pub receptions: u64,
}

impl SimStats {
    /// Fraction of received messages a node ends up forwarding.
    pub fn forwarding_rate(&self) -> f64 {
        if self.receptions == 0 {
            0.0
        } else {
            self.forwards as f64 / self.receptions as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: Vec<EventRecord>,
    pub network: SimNetwork,
    pub topics: TopicSchedule,
    pub stats: SimStats,
}

fn draw_value<R: Rng>(dist: &Normal<f64>, rng: &mut R) -> f64 {
    dist.sample(rng).round().clamp(1.0, 100.0)
}

/// Runs the model until exactly `total_messages` edge crossings are emitted.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let network = generate_network(
        &cfg.structure_targets(),
        &mut stream_rng(cfg.seed, Stream::Structure),
    )?;
    let topics = topic_schedule(cfg)?;
    let mut rng = stream_rng(cfg.seed, Stream::Messages);
    let value_dist = Normal::new(cfg.value_mean, cfg.value_sd)
        .map_err(|e| CoevoError::config(format!("value distribution: {e}")))?;
    let names: Vec<String> = (0..cfg.n_nodes).map(node_name).collect();

    let mut nodes = vec![NodeState::default(); cfg.n_nodes];
    let mut events: Vec<EventRecord> = Vec::with_capacity(cfg.total_messages);
    let mut stats = SimStats::default();
    let mut next_message = 0u64;
    let mut idle = 0u64;
    let mut deliveries: Vec<(usize, u64, f64)> = Vec::new();

    let mut tick = 0u64;
    'run: loop {
        if rng.random::<f64>() < cfg.injection_prob {
            let node = rng.random_range(0..cfg.n_nodes);
            let value = draw_value(&value_dist, &mut rng);
            nodes[node].receive(next_message, value, tick, cfg.queue_capacity);
            next_message += 1;
            stats.injected += 1;
            stats.receptions += 1;
        }

        let topic = topics.topic_at(events.len() as u64);
        let before = events.len();
        for k in 0..cfg.n_nodes {
            if !nodes[k].has_pending() {
                continue;
            }
            for idx in 0..nodes[k].queue.len() {
                let entry = nodes[k].queue[idx];
                if entry.sent || entry.expired {
                    continue;
                }
                let (_, send) = forward_score(&nodes[k], idx, topic, tick, cfg);
                if !send {
                    if score_ceiling(entry.received_tick, tick + 1, cfg) <= cfg.send_threshold {
                        nodes[k].queue[idx].expired = true;
                    }
                    continue;
                }
                nodes[k].queue[idx].sent = true;
                nodes[k].forwarded += 1;
                stats.forwards += 1;
                for &(dst, w) in &network.out[k] {
                    if rng.random::<f64>() < w {
                        events.push(EventRecord {
                            timestamp: tick as i64,
                            actor: names[k].clone(),
                            targets: vec![names[dst].clone()],
                            doc_id: format!("m{}", events.len()),
                            payload: Payload::Numeric(entry.value),
                            group: None,
                        });
                        deliveries.push((dst, entry.message, entry.value));
                        if events.len() == cfg.total_messages {
                            break 'run;
                        }
                    }
                }
            }
        }
        for (dst, msg, value) in deliveries.drain(..) {
            if nodes[dst].receive(msg, value, tick + 1, cfg.queue_capacity) {
                stats.receptions += 1;
            }
        }

        if events.len() == before {
            idle += 1;
            if idle >= cfg.stall_ticks {
                return Err(CoevoError::Deadlock {
                    idle_ticks: idle,
                    emitted: events.len(),
                });
            }
        } else {
            idle = 0;
        }
        tick += 1;
    }
    stats.ticks = tick + 1;

    Ok(SimOutput {
        events,
        network,
        topics,
        stats,
    })
}
