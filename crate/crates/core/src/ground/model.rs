use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::grid::SurfaceGrid;
use super::scenario::{Scenario, ScenarioSpec};

/// Settlement magnitude the reference scenario is calibrated to, mm.
pub const REFERENCE_MAX_SETTLEMENT_MM: f64 = 10.0;

/// Analytic trough-superposition settlement model.
///
/// Each excavated ring `j` adds a volume-loss increment `ΔV_j` that grows as
/// the grouting and face pressures fall towards their lower bounds. The
/// increment spreads as a Gaussian trough across the axis and a Gaussian
/// kernel along it, centred on the ring position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundModel {
    pub ring_length_m: f64,
    /// Axis position of the face before the first ring, m.
    pub face_start_m: f64,
    pub trough_width_m: f64,
    pub longitudinal_width_m: f64,
    pub base_increment_mm: f64,
    pub grouting_sensitivity_mm: f64,
    pub face_sensitivity_mm: f64,
    pub grouting_bounds_kpa: (f64, f64),
    pub face_bounds_kpa: (f64, f64),
    /// Calibration gain `K`.
    pub gain: f64,
}

impl Default for GroundModel {
    fn default() -> Self {
        let spec = ScenarioSpec::default();
        Self {
            ring_length_m: 2.0,
            face_start_m: -24.0,
            trough_width_m: 10.0,
            longitudinal_width_m: 6.0,
            base_increment_mm: 0.2,
            grouting_sensitivity_mm: 0.5,
            face_sensitivity_mm: 0.3,
            grouting_bounds_kpa: spec.grouting_bounds_kpa,
            face_bounds_kpa: spec.face_bounds_kpa,
            gain: 1.0,
        }
    }
}

impl GroundModel {
    /// Defaults with the pressure bounds of `spec`.
    pub fn for_spec(spec: &ScenarioSpec) -> Self {
        Self { grouting_bounds_kpa: spec.grouting_bounds_kpa, face_bounds_kpa: spec.face_bounds_kpa, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ring length", self.ring_length_m),
            ("trough width", self.trough_width_m),
            ("longitudinal width", self.longitudinal_width_m),
            ("gain", self.gain),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Axis position of ring `j` (1-based).
    #[inline]
    pub fn ring_position(&self, j: usize) -> f64 {
        self.face_start_m + self.ring_length_m * j as f64
    }

    /// Volume-loss increment of one ring, mm, never negative.
    pub fn increment(&self, grouting_kpa: f64, face_kpa: f64) -> f64 {
        let unit = |v: f64, (lo, hi): (f64, f64)| (v - lo) / (hi - lo);
        let dv = self.base_increment_mm
            + self.grouting_sensitivity_mm * (1.0 - unit(grouting_kpa, self.grouting_bounds_kpa))
            + self.face_sensitivity_mm * (1.0 - unit(face_kpa, self.face_bounds_kpa));
        dv.max(0.0)
    }

    #[inline]
    fn transverse(&self, x2: f64) -> f64 {
        (-x2 * x2 / (2.0 * self.trough_width_m * self.trough_width_m)).exp()
    }

    #[inline]
    fn longitudinal(&self, dx1: f64) -> f64 {
        (-dx1 * dx1 / (2.0 * self.longitudinal_width_m * self.longitudinal_width_m)).exp()
    }

    /// Settlement at `point` after every step `1..=n`, mm (non-positive).
    ///
    /// Entry `t - 1` only reads pressures at steps `≤ t`.
    pub fn settlement_history(&self, scenario: &Scenario, point: (f64, f64)) -> Vec<f64> {
        let lateral = self.transverse(point.1);
        let mut acc = 0.0;
        scenario
            .grouting_kpa
            .iter()
            .zip(&scenario.face_kpa)
            .enumerate()
            .map(|(idx, (&pg, &ps))| {
                let j = idx + 1;
                acc += self.increment(pg, ps) * lateral * self.longitudinal(point.0 - self.ring_position(j));
                -self.gain * acc
            })
            .collect()
    }

    /// Settlement at one point after step `t_i` (1-based), mm.
    pub fn settlement(&self, scenario: &Scenario, point: (f64, f64), t_i: usize) -> Result<f64> {
        if t_i == 0 || t_i > scenario.n_steps() {
            return Err(Error::invalid(format!("step {t_i} outside 1..={}", scenario.n_steps())));
        }
        let truncated = Scenario {
            id: scenario.id,
            grouting_kpa: scenario.grouting_kpa[..t_i].to_vec(),
            face_kpa: scenario.face_kpa[..t_i].to_vec(),
        };
        Ok(*self.settlement_history(&truncated, point).last().expect("t_i ≥ 1"))
    }

    /// Settlement over all grid points after step `t_i`, mm.
    pub fn settlement_field(&self, scenario: &Scenario, grid: &SurfaceGrid, t_i: usize) -> Result<Vec<f64>> {
        grid.points.iter().map(|&p| self.settlement(scenario, p, t_i)).collect()
    }
}

/// Gain `K` such that the reference scenario's peak settlement over `grid` at
/// the last step is exactly [`REFERENCE_MAX_SETTLEMENT_MM`].
///
/// Found by bisection to 1e-12 relative width.
pub fn calibrate_gain(model: &GroundModel, spec: &ScenarioSpec, grid: &SurfaceGrid) -> Result<f64> {
    spec.validate()?;
    let reference = Scenario::reference(spec);
    let peak = |gain: f64| -> f64 {
        let m = GroundModel { gain, ..*model };
        grid.points
            .iter()
            .map(|&p| m.settlement_history(&reference, p).last().copied().unwrap_or(0.0).abs())
            .fold(0.0, f64::max)
    };
    let unit = peak(1.0);
    if !(unit > 0.0 && unit.is_finite()) {
        return Err(Error::invalid("reference scenario produces no settlement on this grid"));
    }
    let target = REFERENCE_MAX_SETTLEMENT_MM;
    let (mut lo, mut hi) = (0.0, 1.0);
    while peak(hi) < target {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if peak(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Model with the pressure bounds of `spec` and its gain calibrated on `grid`.
pub fn calibrated_model(base: GroundModel, spec: &ScenarioSpec, grid: &SurfaceGrid) -> Result<GroundModel> {
    let base =
        GroundModel { grouting_bounds_kpa: spec.grouting_bounds_kpa, face_bounds_kpa: spec.face_bounds_kpa, ..base };
    let gain = calibrate_gain(&base, spec, grid)?;
    let m = GroundModel { gain, ..base };
    m.validate()?;
    Ok(m)
}
