//! Network-wide dominant topics with Poisson lifetimes.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{stream_rng, SimConfig, Stream};
use crate::error::{CoevoError, Result};

/// Consecutive topics as `(value, lifetime in emitted events)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicSchedule {
    pub topics: Vec<(f64, u64)>,
    starts: Vec<u64>,
}

impl TopicSchedule {
    pub fn new(topics: Vec<(f64, u64)>) -> Self {
        let mut starts = Vec::with_capacity(topics.len());
        let mut at = 0u64;
        for &(_, life) in &topics {
            starts.push(at);
            at += life;
        }
        TopicSchedule { topics, starts }
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    /// Total number of events covered.
    pub fn span(&self) -> u64 {
        self.topics.iter().map(|&(_, l)| l).sum()
    }

    /// Topic active when `event` events have been emitted; the last topic
    /// persists past the end of the schedule.
    pub fn topic_at(&self, event: u64) -> Option<f64> {
        if self.topics.is_empty() {
            return None;
        }
        let k = self.starts.partition_point(|&s| s <= event);
        Some(self.topics[k.saturating_sub(1)].0)
    }
}

/// Topic values uniform on the integers 1..=100; lifetimes Poisson with the
/// configured mean, zero draws redrawn. Empty when topics are disabled.
pub fn topic_schedule(cfg: &SimConfig) -> Result<TopicSchedule> {
    if !cfg.topic_enabled {
        return Ok(TopicSchedule::default());
    }
    let poisson = Poisson::new(cfg.topic_mean_lifetime)
        .map_err(|e| CoevoError::config(format!("topic lifetime: {e}")))?;
    let mut rng = stream_rng(cfg.seed, Stream::Topics);
    let mut topics = Vec::new();
    let mut covered = 0u64;
    while covered < cfg.total_messages as u64 {
        let value = rng.random_range(1..=100) as f64;
        let life = loop {
            let draw = poisson.sample(&mut rng) as u64;
            if draw > 0 {
                break draw;
            }
        };
        covered += life;
        topics.push((value, life));
    }
    Ok(TopicSchedule::new(topics))
}
