use serde::{Deserialize, Serialize};

use super::{SimError, SimStats};
use crate::model::ConnType;

/// Significance level of the holding-time test.
pub const KS_ALPHA: f64 = 0.01;

const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub samples: usize,
    pub rate: f64,
    /// Largest gap between the empirical and the exponential CDF.
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
}

/// Kolmogorov tail `Q(x) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 x^2)`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let j = f64::from(j);
        let term = (-2.0 * j * j * x * x).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test of `samples` against Exponential(`rate`),
/// with the asymptotic p-value and the small-sample correction
/// `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D`.
pub fn ks_exponential(samples: &[f64], rate: f64) -> Result<KsReport, SimError> {
    if samples.len() < MIN_SAMPLES {
        return Err(SimError::InsufficientSamples { needed: MIN_SAMPLES, got: samples.len() });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = 1.0 - (-rate * x.max(0.0)).exp();
        d = d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n);
    }
    let en = n.sqrt();
    let p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(KsReport { samples: sorted.len(), rate, statistic: d, p_value, pass: p_value >= KS_ALPHA })
}

/// Tests the residual holding times of recovered `ty` connections against
/// Exponential(`mu`).
pub fn recovery_holding_test(stats: &SimStats, ty: ConnType, mu: f64) -> Result<KsReport, SimError> {
    ks_exponential(stats.samples(ty), mu)
}
