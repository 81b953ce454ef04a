use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{streams, RngStream};

/// Monitoring-data synthesis: `s_H = k · s_L + N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfSpec {
    pub k: f64,
    pub sigma_mm: f64,
    pub seed: u64,
}

impl HfSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::invalid(format!("scaling factor k must be > 0, got {}", self.k)));
        }
        if !(self.sigma_mm >= 0.0 && self.sigma_mm.is_finite()) {
            return Err(Error::invalid(format!("noise sigma must be ≥ 0, got {}", self.sigma_mm)));
        }
        Ok(())
    }
}

pub fn synthesize_hifi(s_low: &[f64], spec: &HfSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed).derive(streams::NOISE);
    Ok(s_low
        .iter()
        .map(|&s| {
            let noise = rng.standard_normal();
            s * spec.k + spec.sigma_mm * noise
        })
        .collect())
}

/// Noise level that makes the expected relative L² discrepancy of
/// [`synthesize_hifi`] equal `target_level`.
///
/// Uses `E‖s_H − s_L‖² / ‖s_L‖² = (1 − k)² + N σ² / ‖s_L‖²`.
pub fn calibrate_noise(target_level: f64, k: f64, s_low: &[f64]) -> Result<f64> {
    if s_low.is_empty() {
        return Err(Error::invalid("cannot calibrate noise on an empty series"));
    }
    let floor = (1.0 - k).abs();
    let budget = target_level * target_level - (1.0 - k) * (1.0 - k);
    // tolerate rounding when the scaling alone spends the whole budget
    if budget < -1e-12 * target_level.max(1.0) {
        return Err(Error::invalid(format!(
            "error level {target_level} unreachable with k = {k}; minimum achievable level is {floor}"
        )));
    }
    let mean_sq = s_low.iter().map(|s| s * s).sum::<f64>() / s_low.len() as f64;
    Ok((budget.max(0.0) * mean_sq).sqrt())
}

/// Relative discrepancy `‖a − b‖₂ / ‖b‖₂`.
pub fn l2_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("series lengths differ: {} vs {}", a.len(), b.len())));
    }
    let den = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::invalid("reference series has zero norm"));
    }
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    Ok(num / den)
}
