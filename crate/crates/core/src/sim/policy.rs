//! Per-node message queues and the forwarding rule.

use std::collections::{HashSet, VecDeque};

use super::SimConfig;

/// Width of the message value range, used to normalise differences.
pub const VALUE_SPAN: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueEntry {
    pub message: u64,
    pub value: f64,
    pub received_tick: u64,
    pub sent: bool,
    /// No later tick can push the score over the threshold; never rescanned.
    pub expired: bool,
}

/// Bounded queue of received messages, oldest first.
#[derive(Debug, Clone, Default)]
pub struct NodeState {
    pub queue: VecDeque<QueueEntry>,
    seen: HashSet<u64>,
    pub received: u64,
    pub forwarded: u64,
}

impl NodeState {
    /// Queues a message unless this node has already received it. Returns
    /// whether it was queued.
    pub fn receive(&mut self, message: u64, value: f64, tick: u64, capacity: usize) -> bool {
        if !self.seen.insert(message) {
            return false;
        }
        self.queue.push_back(QueueEntry {
            message,
            value,
            received_tick: tick,
            sent: false,
            expired: false,
        });
        while self.queue.len() > capacity.max(1) {
            self.queue.pop_front();
        }
        self.received += 1;
        true
    }

    /// Values of up to `window` most recent entries other than `skip`.
    pub fn recent_values(&self, skip: usize, window: usize) -> Vec<f64> {
        self.queue
            .iter()
            .enumerate()
            .rev()
            .filter(|&(i, _)| i != skip)
            .take(window)
            .map(|(_, e)| e.value)
            .collect()
    }

    pub fn has_pending(&self) -> bool {
        self.queue.iter().any(|e| !e.sent && !e.expired)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParts {
    pub recency: f64,
    pub novelty: f64,
    pub penalty: f64,
    pub score: f64,
}

/// Recency, novelty and topicality of a message value, combined linearly.
pub fn score_message(
    value: f64,
    received_tick: u64,
    recent: &[f64],
    topic: Option<f64>,
    tick: u64,
    cfg: &SimConfig,
) -> ScoreParts {
    let age = tick.saturating_sub(received_tick) as f64;
    let recency = (-age / cfg.recency_tau).exp();
    let scale = if cfg.novelty_normalized { VALUE_SPAN } else { 1.0 };
    let novelty = if recent.is_empty() {
        if cfg.novelty_normalized {
            1.0
        } else {
            VALUE_SPAN
        }
    } else {
        recent.iter().map(|r| (value - r).abs()).sum::<f64>() / recent.len() as f64 / scale
    };
    let penalty = match topic {
        Some(t) if cfg.topic_enabled => (value - t).abs() / VALUE_SPAN,
        _ => 0.0,
    };
    let score = cfg.weight_recency * recency + cfg.weight_novelty * novelty - cfg.weight_topicality * penalty;
    ScoreParts {
        recency,
        novelty,
        penalty,
        score,
    }
}

/// Score of queue entry `entry` at `tick`, and whether it clears the threshold.
pub fn forward_score(
    node: &NodeState,
    entry: usize,
    topic: Option<f64>,
    tick: u64,
    cfg: &SimConfig,
) -> (f64, bool) {
    let e = &node.queue[entry];
    let recent = node.recent_values(entry, cfg.novelty_window);
    let parts = score_message(e.value, e.received_tick, &recent, topic, tick, cfg);
    (parts.score, parts.score > cfg.send_threshold)
}

/// Highest score an entry could still reach at `tick` or later.
pub fn score_ceiling(received_tick: u64, tick: u64, cfg: &SimConfig) -> f64 {
    let age = tick.saturating_sub(received_tick) as f64;
    let max_novelty = if cfg.novelty_normalized { 1.0 } else { VALUE_SPAN };
    cfg.weight_recency * (-age / cfg.recency_tau).exp() + cfg.weight_novelty * max_novelty
}
