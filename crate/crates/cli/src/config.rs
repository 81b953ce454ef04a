//! Run configuration.
//!
//! A config file is TOML; every key is optional and overrides the preset
//! (`full`, or `reduced` with `--reduced`). A file can set the optional keys
//! `sensors` and `batch_size` but cannot clear them, so start from a preset
//! that leaves them unset when the default is wanted. Sections and keys:
//!
//! ```toml
//! seed = 0                      # scenarios, initialisation, sampling, noise
//!
//! [data]
//! n_scenarios = 100
//! n_steps = 64                  # excavation steps per scenario
//! grid_n_x1 = 14                # stations along the tunnel axis
//! grid_n_x2 = 9                 # stations across it (odd keeps an axis line)
//! length_x1_m = 104.0
//! width_x2_m = 80.0
//! face_start_m = -24.0          # face position before the first ring
//! grouting_bounds_kpa = [120.0, 220.0]
//! face_bounds_kpa = [100.0, 200.0]
//! max_step_change_kpa = 15.0
//! sensors = [4, 22, ...]        # grid indices; omit for the default layout
//!
//! [lowfi]                       # offline stage
//! iterations = 5000
//! batch_size = 200000           # omit for full batch
//! width = 100
//! depth = 3
//! validate_every = 100
//! schedule = { initial = 1e-3, decay_steps = 1000, decay_rate = 0.9 }
//!
//! [residual]                    # online stage, same keys as [lowfi]
//! iterations = 200
//! width = 100
//! depth = 2
//!
//! [study]
//! error_type_scenarios = [91, 95, 99]
//! error_level_scenario = 100
//! min_data_30 = [93, 94, 97]
//! min_data_50 = [92, 96, 98]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use tunnelfuse_core::fidelity::TrainConfig;
use tunnelfuse_core::ground::{
    calibrated_model, sensor_layout, validate_sensors, GroundModel, ScenarioSpec, SurfaceGrid,
};
use tunnelfuse_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n_scenarios: usize,
    pub n_steps: usize,
    pub grid_n_x1: usize,
    pub grid_n_x2: usize,
    pub length_x1_m: f64,
    pub width_x2_m: f64,
    pub face_start_m: f64,
    pub grouting_bounds_kpa: (f64, f64),
    pub face_bounds_kpa: (f64, f64),
    pub max_step_change_kpa: f64,
    pub sensors: Option<Vec<usize>>,
}

impl DataConfig {
    pub fn full() -> Self {
        let s = ScenarioSpec::default();
        Self {
            n_scenarios: 100,
            n_steps: s.n_steps,
            grid_n_x1: 14,
            grid_n_x2: 9,
            length_x1_m: 104.0,
            width_x2_m: 80.0,
            face_start_m: GroundModel::default().face_start_m,
            grouting_bounds_kpa: s.grouting_bounds_kpa,
            face_bounds_kpa: s.face_bounds_kpa,
            max_step_change_kpa: s.max_step_change_kpa,
            sensors: None,
        }
    }

    /// 30 scenarios of 32 steps on an 8 × 6 grid. The face starts further
    /// forward so the shorter drive still crosses most of the grid.
    ///
    /// The grid has no axis line, so the 15 sensors are listed: stations
    /// 1, 2, 3, 5 and 6 along `x1`, each at transverse stations 1, 2 and 4.
    pub fn reduced() -> Self {
        let sensors = [1, 2, 3, 5, 6].iter().flat_map(|i1| [1, 2, 4].map(|i2| i1 * 6 + i2)).collect();
        Self {
            n_scenarios: 30,
            n_steps: 32,
            grid_n_x1: 8,
            grid_n_x2: 6,
            face_start_m: -8.0,
            sensors: Some(sensors),
            ..Self::full()
        }
    }

    pub fn scenario_spec(&self, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            seed,
            n_steps: self.n_steps,
            grouting_bounds_kpa: self.grouting_bounds_kpa,
            face_bounds_kpa: self.face_bounds_kpa,
            max_step_change_kpa: self.max_step_change_kpa,
        }
    }

    pub fn grid(&self) -> Result<SurfaceGrid> {
        SurfaceGrid::tensor(self.grid_n_x1, self.grid_n_x2, self.length_x1_m, self.width_x2_m)
    }

    /// Configured sensor indices, or the default layout.
    pub fn sensors(&self) -> Result<Vec<usize>> {
        let grid = self.grid()?;
        match &self.sensors {
            Some(s) => {
                validate_sensors(&grid, s)?;
                Ok(s.clone())
            }
            None => sensor_layout(&grid),
        }
    }

    /// Ground model calibrated on this grid and horizon.
    pub fn ground_model(&self, seed: u64) -> Result<GroundModel> {
        let spec = self.scenario_spec(seed);
        let base = GroundModel { face_start_m: self.face_start_m, ..GroundModel::for_spec(&spec) };
        calibrated_model(base, &spec, &self.grid()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub error_type_scenarios: [usize; 3],
    pub error_level_scenario: usize,
    pub min_data_30: [usize; 3],
    pub min_data_50: [usize; 3],
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            error_type_scenarios: [91, 95, 99],
            error_level_scenario: 100,
            min_data_30: [93, 94, 97],
            min_data_50: [92, 96, 98],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub lowfi: TrainConfig,
    pub residual: TrainConfig,
    pub study: StudyConfig,
}

impl RunConfig {
    pub fn full() -> Self {
        Self {
            seed: 0,
            data: DataConfig::full(),
            lowfi: TrainConfig::offline(),
            residual: TrainConfig::online(),
            study: StudyConfig::default(),
        }
    }

    pub fn reduced() -> Self {
        Self { data: DataConfig::reduced(), lowfi: TrainConfig::reduced(), ..Self::full() }
    }

    /// Full-size data and studies with a desk-sized offline fit.
    pub fn study() -> Self {
        Self {
            lowfi: TrainConfig { iterations: 5000, batch_size: Some(10_000), width: 64, ..TrainConfig::offline() },
            ..Self::full()
        }
    }

    /// `base` with the keys present in `text` replaced.
    pub fn overlay(base: &Self, text: &str) -> Result<Self> {
        let invalid = |e: &dyn std::fmt::Display| Error::InvalidArgument(format!("config: {e}"));
        let patch: toml::Table = text.parse().map_err(|e| invalid(&e))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| invalid(&e))?;
        merge(&mut merged, patch);
        let cfg: Self = merged.try_into().map_err(|e| invalid(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: &Self) -> Result<Self> {
        Self::overlay(base, &std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.scenario_spec(self.seed).validate()?;
        self.data.grid()?;
        if self.data.n_scenarios < 3 {
            return Err(Error::InvalidArgument("config: need at least 3 scenarios for a split".into()));
        }
        self.lowfi.validate()?;
        self.residual.validate()
    }

    /// Stage settings with the run seed applied.
    pub fn lowfi_train(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.lowfi.clone() }
    }

    pub fn residual_train(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.residual.clone() }
    }
}

fn merge(into: &mut toml::Table, patch: toml::Table) {
    for (k, v) in patch {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => merge(dst, src),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_keeps_unset_keys() {
        let cfg = RunConfig::overlay(&RunConfig::reduced(), "seed = 7\n[lowfi]\niterations = 10\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.lowfi.iterations, 10);
        assert_eq!(cfg.lowfi.width, 64);
        assert_eq!(cfg.data, DataConfig::reduced());
    }

    #[test]
    fn bad_config_rejected() {
        assert!(RunConfig::overlay(&RunConfig::full(), "[data]\nn_steps = 0\n").is_err());
        assert!(RunConfig::overlay(&RunConfig::full(), "[lowfi]\niterations = \"many\"\n").is_err());
        assert!(RunConfig::overlay(&RunConfig::full(), "not toml").is_err());
    }

    #[test]
    fn reduced_shape() {
        let d = DataConfig::reduced();
        assert_eq!(d.grid().unwrap().len(), 48);
        assert_eq!(d.n_steps, 32);
        assert_eq!(d.sensors().unwrap().len(), 15);
    }
}
