//! Message-forwarding model on a fixed random network.
//!
//! Nodes keep a queue of received messages (integer values in `[1, 100]`).
//! Each tick an exogenous message may appear at a random node; then every
//! node scores its unsent messages on recency, novelty against its recent
//! queue, and distance from the current network-wide topic, and forwards
//! those scoring above the threshold. A forwarded message crosses each
//! out-edge independently with the edge weight as probability, and every
//! crossing is one emitted event.
//!
//! Randomness comes from three independent ChaCha streams of one seed:
//! network structure, topic schedule and message traffic.

mod compare;
mod engine;
mod network;
mod policy;
mod topics;

pub use compare::{
    analyze_log, compare_topicality, CombinedCorrelation, ConditionSummary, RunAnalysis, TopicalityReport,
    SIM_SEGMENT_SIZE,
};
pub use engine::{run_simulation, SimOutput, SimStats};
pub use network::{generate_network, node_name, SimNetwork, StructureTargets};
pub use policy::{forward_score, score_ceiling, score_message, NodeState, QueueEntry, ScoreParts};
pub use topics::{topic_schedule, TopicSchedule};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoevoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub target_reciprocity: f64,
    pub target_clustering: f64,
    pub structure_tolerance: f64,
    pub max_structure_iters: u64,
    /// Gaussian message values, rounded and clamped to `[1, 100]`.
    pub value_mean: f64,
    pub value_sd: f64,
    pub topic_enabled: bool,
    /// Mean topic lifetime, in emitted events.
    pub topic_mean_lifetime: f64,
    pub weight_recency: f64,
    pub weight_novelty: f64,
    pub weight_topicality: f64,
    /// Recency time constant, in ticks.
    pub recency_tau: f64,
    /// Number of recent queue entries novelty is measured against.
    pub novelty_window: usize,
    /// Novelty divided by the value span (so it lies in `[0, 1]`).
    pub novelty_normalized: bool,
    pub queue_capacity: usize,
    pub send_threshold: f64,
    /// Per-tick probability that a fresh message appears at a random node.
    pub injection_prob: f64,
    pub total_messages: usize,
    /// Ticks without any transmission before the run is declared stalled.
    pub stall_ticks: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_nodes: 100,
            n_edges: 1000,
            target_reciprocity: 0.5,
            target_clustering: 0.3,
            structure_tolerance: 0.02,
            max_structure_iters: 1_000_000,
            value_mean: 50.5,
            value_sd: 15.0,
            topic_enabled: false,
            topic_mean_lifetime: 500.0,
            weight_recency: 1.0,
            weight_novelty: 1.0,
            weight_topicality: 1.0,
            recency_tau: 10.0,
            novelty_window: 10,
            novelty_normalized: true,
            queue_capacity: 50,
            send_threshold: 0.5,
            injection_prob: 0.05,
            total_messages: 90_000,
            stall_ticks: 100_000,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        network::validate_targets(&self.structure_targets())?;
        if self.total_messages < 1 {
            return Err(CoevoError::config("total_messages must be at least 1"));
        }
        if !(self.recency_tau > 0.0) {
            return Err(CoevoError::config("recency_tau must be positive"));
        }
        if !(0.0..=1.0).contains(&self.injection_prob) || self.injection_prob == 0.0 {
            return Err(CoevoError::config("injection_prob must be in (0, 1]"));
        }
        if self.topic_enabled && !(self.topic_mean_lifetime > 0.0) {
            return Err(CoevoError::config("topic_mean_lifetime must be positive"));
        }
        if !(self.value_sd >= 0.0) {
            return Err(CoevoError::config("value_sd must be non-negative"));
        }
        if self.queue_capacity == 0 {
            return Err(CoevoError::config("queue_capacity must be at least 1"));
        }
        if self.stall_ticks == 0 {
            return Err(CoevoError::config("stall_ticks must be at least 1"));
        }
        Ok(())
    }

    pub fn structure_targets(&self) -> StructureTargets {
        StructureTargets {
            n_nodes: self.n_nodes,
            n_edges: self.n_edges,
            reciprocity: self.target_reciprocity,
            clustering: self.target_clustering,
            tolerance: self.structure_tolerance,
            max_iters: self.max_structure_iters,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Structure = 0,
    Topics = 1,
    Messages = 2,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Mean absolute difference over all cross pairs of the two segments'
/// messages, or the plain sum with `sum = true`. `None` if either is empty.
pub fn message_distance(current: &[f64], previous: &[f64], sum: bool) -> Option<f64> {
    if current.is_empty() || previous.is_empty() {
        return None;
    }
    let mut prev = previous.to_vec();
    prev.sort_by(f64::total_cmp);
    // prefix sums make this O((n + m) log m)
    let mut prefix = Vec::with_capacity(prev.len() + 1);
    prefix.push(0.0);
    for v in &prev {
        prefix.push(prefix.last().unwrap() + v);
    }
    let total_prev = *prefix.last().unwrap();
    let m = prev.len() as f64;
    let mut acc = 0.0;
    for &x in current {
        let k = prev.partition_point(|&p| p < x);
        let below = x * k as f64 - prefix[k];
        let above = (total_prev - prefix[k]) - x * (m - k as f64);
        acc += below + above;
    }
    Some(if sum {
        acc
    } else {
        acc / (current.len() as f64 * m)
    })
}
