use serde::{Deserialize, Serialize};

use crate::model::ConnType;

/// Lifetime of one finished connection, kept when
/// [`SimOptions::record_completions`](super::SimOptions::record_completions) is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub ty: ConnType,
    pub start: f64,
    pub end: f64,
    /// Drawn work in full-rate seconds.
    pub nominal: f64,
    /// The allocation changed at least once during the connection's life.
    pub reshaped: bool,
}

/// Counters of one replication. Only events after the warm-up are counted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub seed: u64,
    pub replication: u64,
    /// Length of the measured window.
    pub observed_time: f64,
    /// New-call attempts per type, from idle and single-connection users.
    pub new_offered: [u64; 2],
    pub new_accepted: [u64; 2],
    pub new_blocked: [u64; 2],
    /// The subset of attempts made by idle users.
    pub idle_offered: [u64; 2],
    pub idle_blocked: [u64; 2],
    /// Handoff arrivals per family, population-cap rejections included.
    pub handoff_offered: [u64; 6],
    pub handoff_full: [u64; 6],
    pub handoff_frozen: [u64; 6],
    pub handoff_dropped: [u64; 6],
    pub handoff_capped: [u64; 6],
    pub departures: u64,
    /// Connections that ran out of work, per type.
    pub completions: [u64; 2],
    /// Foreground endings of two-connection users, per class.
    pub recovery_attempts: [u64; 4],
    pub recovery_failures: [u64; 4],
    /// Integral of the cell load over the measured window.
    pub load_integral: f64,
    /// Residual work at the recovery instant of connections that had lost
    /// subchannels, per type of the recovered connection.
    pub recovery_samples: [Vec<f64>; 2],
    pub completion_log: Vec<CompletionRecord>,
}

impl SimStats {
    /// Checks `offered = accepted + blocked` and
    /// `offered = full + frozen + dropped + capped`.
    pub fn counters_balance(&self) -> bool {
        let calls = (0..2).all(|k| {
            self.new_offered[k] == self.new_accepted[k] + self.new_blocked[k]
                && self.idle_offered[k] <= self.new_offered[k]
                && self.idle_blocked[k] <= self.new_blocked[k]
        });
        let handoffs = (0..6).all(|f| {
            self.handoff_offered[f]
                == self.handoff_full[f] + self.handoff_frozen[f] + self.handoff_dropped[f] + self.handoff_capped[f]
        });
        let recoveries = (0..4).all(|c| self.recovery_failures[c] <= self.recovery_attempts[c]);
        calls && handoffs && recoveries
    }

    pub fn samples(&self, ty: ConnType) -> &[f64] {
        &self.recovery_samples[ty.index()]
    }
}
