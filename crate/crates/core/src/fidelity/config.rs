use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::LrSchedule;

/// Optimiser settings for one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Samples per step; `None` trains on the full set every step.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub width: usize,
    pub depth: usize,
    /// Validation R² is recorded every this many iterations.
    pub validate_every: usize,
    pub adam: AdamConfig,
}

/// Adam moment decay rates and denominator guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("adam {name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!("adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::offline()
    }
}

impl TrainConfig {
    /// Full-size low-fidelity stage.
    ///
    /// `beta2 = 0.9` rather than the usual 0.999: with the fixed learning-rate
    /// schedule the slower second moment leaves the offline fit far short of
    /// converging within its iteration budget.
    pub fn offline() -> Self {
        Self {
            iterations: 5000,
            batch_size: Some(200_000),
            schedule: LrSchedule::default(),
            seed: 0,
            width: 100,
            depth: 3,
            validate_every: 100,
            adam: AdamConfig { beta2: 0.9, ..AdamConfig::default() },
        }
    }

    /// Desk-sized low-fidelity stage.
    pub fn reduced() -> Self {
        Self { iterations: 2000, batch_size: Some(20_000), width: 64, ..Self::offline() }
    }

    /// Residual stage, refitted at every committed step. The fast second
    /// moment of the offline stage lets the residual chase reading noise.
    pub fn online() -> Self {
        Self { iterations: 200, batch_size: None, depth: 2, adam: AdamConfig::default(), ..Self::offline() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be ≥ 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be ≥ 1"));
        }
        if self.width == 0 || self.depth == 0 {
            return Err(Error::invalid("network width and depth must be ≥ 1"));
        }
        if self.validate_every == 0 {
            return Err(Error::invalid("validate_every must be ≥ 1"));
        }
        self.adam.validate()?;
        self.schedule.validate()
    }
}

/// Loss and validation trace of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub entries: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Number of completed updates.
    pub iteration: usize,
    pub loss: f64,
    pub val_r2: Option<f64>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.loss)
    }
}
