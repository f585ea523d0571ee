//! Per-cycle measurements: Δp and the spread of a Δp series.

use serde::{Deserialize, Serialize};

use crate::hashcore::{Digest32, Fixed6, FixedError};

/// `pass_count / m − θ`, exact to six decimals.
pub fn delta_p(pass_count: u32, events: u32, theta: Fixed6) -> Result<Fixed6, FixedError> {
    let rate = Fixed6::from_ratio(i64::from(pass_count), i64::from(events))?;
    rate.checked_sub(theta)
        .ok_or_else(|| FixedError::OutOfRange(format!("{rate} - {theta}")))
}

/// Population variance (divide by `n`). Empty input gives 0.
pub fn arm_variance(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

pub fn mean(series: &[f64]) -> f64 {
    if series.is_empty() {
        0.0
    } else {
        series.iter().sum::<f64>() / series.len() as f64
    }
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub arm: String,
    pub cycle: u64,
    pub pass_count: u32,
    pub fail_count: u32,
    pub abstain_count: u32,
    pub delta_p: Fixed6,
    pub epistemic_risk: Fixed6,
    pub attestation: Digest32,
}

impl CycleRecord {
    pub fn events(&self) -> u32 {
        self.pass_count + self.fail_count + self.abstain_count
    }
}
