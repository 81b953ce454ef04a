use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{streams, RngStream};

/// How pressure scenarios are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_steps: usize,
    /// Grouting pressure bounds, kPa.
    pub grouting_bounds_kpa: (f64, f64),
    /// Face support pressure bounds, kPa.
    pub face_bounds_kpa: (f64, f64),
    /// Largest change between consecutive steps, kPa.
    pub max_step_change_kpa: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_steps: 64,
            grouting_bounds_kpa: (120.0, 220.0),
            face_bounds_kpa: (100.0, 200.0),
            max_step_change_kpa: 15.0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be ≥ 1"));
        }
        for (name, (lo, hi)) in [("grouting", self.grouting_bounds_kpa), ("face", self.face_bounds_kpa)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("{name} pressure bounds must be ordered, got [{lo}, {hi}]")));
            }
            if !(self.max_step_change_kpa >= 1.0 && self.max_step_change_kpa <= hi - lo) {
                return Err(Error::invalid(format!(
                    "max step change {} kPa must lie in [1, {}]",
                    self.max_step_change_kpa,
                    hi - lo
                )));
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, grouting_kpa: f64, face_kpa: f64) -> bool {
        let (g0, g1) = self.grouting_bounds_kpa;
        let (f0, f1) = self.face_bounds_kpa;
        (g0..=g1).contains(&grouting_kpa) && (f0..=f1).contains(&face_kpa)
    }
}

/// Pressure histories of one drive, one entry per excavation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub grouting_kpa: Vec<f64>,
    pub face_kpa: Vec<f64>,
}

impl Scenario {
    pub fn n_steps(&self) -> usize {
        self.grouting_kpa.len()
    }

    /// Mid-range constant pressures, used to calibrate the ground gain.
    pub fn reference(spec: &ScenarioSpec) -> Self {
        let mid = |(lo, hi): (f64, f64)| 0.5 * (lo + hi);
        Self {
            id: 0,
            grouting_kpa: vec![mid(spec.grouting_bounds_kpa); spec.n_steps],
            face_kpa: vec![mid(spec.face_bounds_kpa); spec.n_steps],
        }
    }
}

/// `next = clamp(prev + delta)`, starting from `initial`.
pub fn bounded_walk(initial: f64, bounds: (f64, f64), deltas: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![initial];
    let mut prev = initial;
    for d in deltas {
        prev = (prev + d).clamp(bounds.0, bounds.1);
        out.push(prev);
    }
    out
}

/// Deterministic in `(spec.seed, id)`; every scenario has its own stream.
pub fn gen_scenario(spec: &ScenarioSpec, id: usize) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed).derive(streams::SCENARIO).derive(id as u64);
    let g0 = rng.uniform(spec.grouting_bounds_kpa.0, spec.grouting_bounds_kpa.1);
    let f0 = rng.uniform(spec.face_bounds_kpa.0, spec.face_bounds_kpa.1);
    let m = spec.max_step_change_kpa;
    let mut dg = Vec::with_capacity(spec.n_steps);
    let mut df = Vec::with_capacity(spec.n_steps);
    for _ in 1..spec.n_steps {
        dg.push(rng.uniform(-m, m));
        df.push(rng.uniform(-m, m));
    }
    Ok(Scenario {
        id,
        grouting_kpa: bounded_walk(g0, spec.grouting_bounds_kpa, dg),
        face_kpa: bounded_walk(f0, spec.face_bounds_kpa, df),
    })
}
