use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous exponential decay: `initial · decay_rate^(step / decay_steps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_steps: usize,
    pub decay_rate: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { initial: 1e-3, decay_steps: 1000, decay_rate: 0.9 }
    }
}

impl LrSchedule {
    pub fn new(initial: f64, decay_steps: usize, decay_rate: f64) -> Result<Self> {
        let s = Self { initial, decay_steps, decay_rate };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.initial.is_finite()) {
            return Err(Error::invalid(format!("initial learning rate must be > 0, got {}", self.initial)));
        }
        if self.decay_steps == 0 {
            return Err(Error::invalid("decay_steps must be ≥ 1"));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::invalid(format!("decay_rate must lie in (0, 1], got {}", self.decay_rate)));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        self.initial * self.decay_rate.powf(step as f64 / self.decay_steps as f64)
    }
}
