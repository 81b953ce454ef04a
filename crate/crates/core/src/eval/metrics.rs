use crate::error::{Error, Result};

/// Coefficient of determination, `1 − SS_res / SS_tot`.
pub fn r2(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::invalid(format!("r2: {} predictions for {} targets", preds.len(), targets.len())));
    }
    if targets.len() < 2 {
        return Err(Error::UndefinedMetric(format!("r2 needs ≥ 2 samples, got {}", targets.len())));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("r2 with constant targets".into()));
    }
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
