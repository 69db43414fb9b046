//! Structure/content co-evolution analysis for communication event logs.
//!
//! The pipeline is: parse a timestamped event log ([`ingest`]), cut it into
//! windows of a fixed number of actions, build one directed weighted graph per
//! window, compute structural metrics ([`netmetrics`]) and content metrics
//! ([`contentmetrics`]) per window, then test stationarity, correlate and
//! regress the resulting series ([`stats`]). The [`sim`] module generates
//! synthetic logs from a message-forwarding model on a random network.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contentmetrics;
pub mod error;
pub mod ingest;
pub mod netmetrics;
pub mod series;
pub mod sim;
pub mod stats;

pub use error::{CoevoError, Result};
