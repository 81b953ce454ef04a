use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn checked(self, channel: &'static str) -> Result<Self> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::invalid(format!("{channel} range is not finite")));
        }
        if self.max <= self.min {
            return Err(Error::DegenerateRange { channel, value: self.min });
        }
        Ok(self)
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// Which input channel a raw value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Grouting,
    Face,
    X1,
    X2,
}

/// Scaling for every network input plus the settlement target scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Length of the pressure history window; the branch input has `2 · n_steps` entries.
    pub n_steps: usize,
    pub grouting: Range,
    pub face: Range,
    pub x1: Range,
    pub x2: Range,
    /// Settlements are divided by this (mm) before training.
    pub settlement_scale: f64,
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be ≥ 1"));
        }
        self.grouting.checked("grouting pressure")?;
        self.face.checked("face pressure")?;
        self.x1.checked("x1")?;
        self.x2.checked("x2")?;
        if !(self.settlement_scale > 0.0 && self.settlement_scale.is_finite()) {
            return Err(Error::DegenerateRange { channel: "settlement", value: self.settlement_scale });
        }
        Ok(())
    }

    /// Pressures scale by the generation bounds; coordinates by the grid
    /// extent; settlements by the largest training magnitude.
    pub fn fit(
        n_steps: usize,
        grouting_bounds: (f64, f64),
        face_bounds: (f64, f64),
        points: &[(f64, f64)],
        settlements_mm: impl IntoIterator<Item = f64>,
    ) -> Result<Self> {
        let fold = |f: fn(&(f64, f64)) -> f64| {
            points
                .iter()
                .map(f)
                .fold(Range::new(f64::INFINITY, f64::NEG_INFINITY), |r, v| Range::new(r.min.min(v), r.max.max(v)))
        };
        let scale = settlements_mm.into_iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let stats = Self {
            n_steps,
            grouting: Range::new(grouting_bounds.0, grouting_bounds.1),
            face: Range::new(face_bounds.0, face_bounds.1),
            x1: fold(|p| p.0),
            x2: fold(|p| p.1),
            settlement_scale: scale,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn range(&self, ch: Channel) -> &Range {
        match ch {
            Channel::Grouting => &self.grouting,
            Channel::Face => &self.face,
            Channel::X1 => &self.x1,
            Channel::X2 => &self.x2,
        }
    }

    pub fn apply(&self, ch: Channel, v: f64) -> f64 {
        self.range(ch).apply(v)
    }

    pub fn invert(&self, ch: Channel, v: f64) -> f64 {
        self.range(ch).invert(v)
    }

    pub fn normalize_settlement(&self, s_mm: f64) -> f64 {
        s_mm / self.settlement_scale
    }

    pub fn denormalize_settlement(&self, s: f64) -> f64 {
        s * self.settlement_scale
    }

    /// Normalised trunk coordinates of a surface point.
    pub fn trunk_input(&self, point: (f64, f64)) -> [f64; 2] {
        [self.x1.apply(point.0), self.x2.apply(point.1)]
    }

    pub fn branch_dim(&self) -> usize {
        2 * self.n_steps
    }
}
