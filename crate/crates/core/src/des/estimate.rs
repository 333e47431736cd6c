use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{SimError, SimStats};
use crate::model::ConnType;
use crate::system_chain::{MetricsOptions, HANDOFF_FAMILIES, HEADLINE_METRICS};

/// Point estimate with a 95% confidence half-width. Either is `None` when
/// undefined (no events in the denominator, or fewer than two replications
/// with a defined ratio).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub value: Option<f64>,
    pub half_width: Option<f64>,
}

impl Interval {
    /// Whether `x` lies in `[value - half_width, value + half_width]`.
    pub fn contains(&self, x: f64) -> bool {
        match (self.value, self.half_width) {
            (Some(v), Some(h)) => (x - v).abs() <= h,
            _ => false,
        }
    }
}

/// Simulated counterpart of [`MetricsReport`](crate::system_chain::MetricsReport).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub replications: usize,
    pub blocking: [Interval; 2],
    pub idle_blocking: [Interval; 2],
    pub handoff_dropping: Interval,
    pub family_dropping: [Interval; 6],
    pub handoff_freeze: Interval,
    pub recovery_dropping: Interval,
    pub cap_rejection_rate: Interval,
    pub utilization: Interval,
    /// Recovery samples pooled over replications, per connection type.
    pub recovery_samples: [usize; 2],
}

impl SimReport {
    /// Same names and order as [`MetricsReport::headline`](crate::system_chain::MetricsReport::headline).
    pub fn headline(&self) -> Vec<(&'static str, Interval)> {
        let values = [
            self.blocking[0],
            self.blocking[1],
            self.idle_blocking[0],
            self.idle_blocking[1],
            self.handoff_dropping,
            self.handoff_freeze,
            self.recovery_dropping,
            self.cap_rejection_rate,
            self.utilization,
        ];
        HEADLINE_METRICS.into_iter().zip(values).collect()
    }

    pub fn get(&self, name: &str) -> Option<Interval> {
        if let Some(i) = HANDOFF_FAMILIES.iter().position(|f| name.strip_prefix("dropping_") == Some(f)) {
            return Some(self.family_dropping[i]);
        }
        self.headline().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }
}

fn interval(stats: &[SimStats], part: impl Fn(&SimStats) -> (f64, f64)) -> Interval {
    let parts: Vec<(f64, f64)> = stats.iter().map(part).collect();
    let num: f64 = parts.iter().map(|p| p.0).sum();
    let den: f64 = parts.iter().map(|p| p.1).sum();
    let value = (den > 0.0).then(|| num / den);
    let ratios: Vec<f64> = parts.iter().filter(|p| p.1 > 0.0).map(|p| p.0 / p.1).collect();
    let n = ratios.len();
    let half_width = (value.is_some() && n >= 2).then(|| {
        // shifted by the first ratio so identical replications give exactly zero
        let d: Vec<f64> = ratios.iter().map(|r| r - ratios[0]).collect();
        let s1: f64 = d.iter().sum();
        let s2: f64 = d.iter().map(|x| x * x).sum();
        let var = ((s2 - s1 * s1 / n as f64) / (n - 1) as f64).max(0.0);
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975);
        t * (var / n as f64).sqrt()
    });
    Interval { value, half_width }
}

fn sum<const N: usize>(a: &[u64; N]) -> f64 {
    a.iter().sum::<u64>() as f64
}

/// Pools replications: ratio-of-sums point estimates, Student-t 95% intervals
/// over the per-replication ratios.
pub fn estimate(stats: &[SimStats], channels: u32, opts: MetricsOptions) -> Result<SimReport, SimError> {
    if stats.len() < 2 {
        return Err(SimError::InsufficientReplications { needed: 2, got: stats.len() });
    }
    let cap = opts.include_cap_in_dropping;
    let admitted = |s: &SimStats| sum(&s.handoff_offered) - sum(&s.handoff_capped);
    Ok(SimReport {
        replications: stats.len(),
        blocking: [0, 1].map(|k| interval(stats, |s| (s.new_blocked[k] as f64, s.new_offered[k] as f64))),
        idle_blocking: [0, 1].map(|k| interval(stats, |s| (s.idle_blocked[k] as f64, s.idle_offered[k] as f64))),
        handoff_dropping: interval(stats, |s| {
            if cap {
                (sum(&s.handoff_dropped) + sum(&s.handoff_capped), sum(&s.handoff_offered))
            } else {
                (sum(&s.handoff_dropped), admitted(s))
            }
        }),
        family_dropping: std::array::from_fn(|f| {
            interval(stats, |s| (s.handoff_dropped[f] as f64, (s.handoff_offered[f] - s.handoff_capped[f]) as f64))
        }),
        handoff_freeze: interval(stats, |s| (sum(&s.handoff_frozen), admitted(s))),
        recovery_dropping: interval(stats, |s| (s.recovery_failures[1] as f64, s.recovery_attempts[1] as f64)),
        cap_rejection_rate: interval(stats, |s| (sum(&s.handoff_capped), s.observed_time)),
        utilization: interval(stats, |s| (s.load_integral, f64::from(channels) * s.observed_time)),
        recovery_samples: ConnType::ALL.map(|ty| stats.iter().map(|s| s.samples(ty).len()).sum()),
    })
}
