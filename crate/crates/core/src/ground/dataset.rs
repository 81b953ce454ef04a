use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::grid::SurfaceGrid;
use super::model::GroundModel;
use super::scenario::{gen_scenario, Scenario, ScenarioSpec};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "scenario_id,t_i,x1_m,x2_m,settlement_mm";

/// One simulated settlement value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub scenario_id: usize,
    /// 1-based excavation step.
    pub t_i: usize,
    pub point_index: usize,
    pub settlement_mm: f64,
}

/// Low-fidelity records for a set of scenarios, ordered by scenario, step, point.
#[derive(Debug, Clone, PartialEq)]
pub struct LowFiData {
    pub spec: ScenarioSpec,
    pub model: GroundModel,
    pub grid: SurfaceGrid,
    pub scenarios: Vec<Scenario>,
    pub records: Vec<RawRecord>,
}

impl LowFiData {
    pub fn scenario(&self, id: usize) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    /// Records of one scenario, contiguous in `records`.
    pub fn records_of(&self, id: usize) -> &[RawRecord] {
        let per = self.spec.n_steps * self.grid.len();
        match self.scenarios.iter().position(|s| s.id == id) {
            Some(pos) if self.records.len() >= (pos + 1) * per => &self.records[pos * per..(pos + 1) * per],
            _ => &[],
        }
    }
}

fn scenario_records(model: &GroundModel, scenario: &Scenario, grid: &SurfaceGrid) -> Vec<RawRecord> {
    let n_t = scenario.n_steps();
    let histories: Vec<Vec<f64>> = grid.points.iter().map(|&p| model.settlement_history(scenario, p)).collect();
    let mut out = Vec::with_capacity(n_t * grid.len());
    for t in 0..n_t {
        for (pi, h) in histories.iter().enumerate() {
            out.push(RawRecord { scenario_id: scenario.id, t_i: t + 1, point_index: pi, settlement_mm: h[t] });
        }
    }
    out
}

/// `n_scenarios · n_steps · grid.len()` records for scenarios `1..=n_scenarios`.
pub fn gen_lowfi_dataset(
    spec: &ScenarioSpec,
    model: &GroundModel,
    n_scenarios: usize,
    grid: &SurfaceGrid,
) -> Result<LowFiData> {
    if n_scenarios == 0 {
        return Err(Error::invalid("need at least one scenario"));
    }
    model.validate()?;
    let scenarios = (1..=n_scenarios).map(|id| gen_scenario(spec, id)).collect::<Result<Vec<_>>>()?;
    let records = scenarios.iter().flat_map(|s| scenario_records(model, s, grid)).collect();
    Ok(LowFiData { spec: *spec, model: *model, grid: grid.clone(), scenarios, records })
}

#[derive(Serialize, Deserialize)]
struct ScenarioJson {
    id: usize,
    grouting_pressure_kpa: Vec<f64>,
    face_pressure_kpa: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    scenario_spec: ScenarioSpec,
    ground_model: GroundModel,
    grid: GridJson,
    scenarios: Vec<ScenarioJson>,
}

#[derive(Serialize, Deserialize)]
struct GridJson {
    n_x1: usize,
    n_x2: usize,
    length_x1_m: f64,
    width_x2_m: f64,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_dataset(data: &LowFiData, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut csv = String::with_capacity(48 * data.records.len() + 64);
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for r in &data.records {
        let (x1, x2) = data.grid.points[r.point_index];
        writeln!(csv, "{},{},{},{},{}", r.scenario_id, r.t_i, x1, x2, r.settlement_mm).expect("string write");
    }
    fs::write(dir.join(format!("{stem}.csv")), csv)?;

    let sidecar = Sidecar {
        schema_version: DATASET_SCHEMA_VERSION,
        scenario_spec: data.spec,
        ground_model: data.model,
        grid: GridJson {
            n_x1: data.grid.n_x1,
            n_x2: data.grid.n_x2,
            length_x1_m: data.grid.length_x1_m,
            width_x2_m: data.grid.width_x2_m,
        },
        scenarios: data
            .scenarios
            .iter()
            .map(|s| ScenarioJson {
                id: s.id,
                grouting_pressure_kpa: s.grouting_kpa.clone(),
                face_pressure_kpa: s.face_kpa.clone(),
            })
            .collect(),
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: impl AsRef<Path>, stem: &str) -> Result<LowFiData> {
    let dir = dir.as_ref();
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    if sidecar.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::invalid(format!("dataset schema version {} unsupported", sidecar.schema_version)));
    }
    let g = &sidecar.grid;
    let grid = SurfaceGrid::tensor(g.n_x1, g.n_x2, g.length_x1_m, g.width_x2_m)?;
    let scenarios: Vec<Scenario> = sidecar
        .scenarios
        .into_iter()
        .map(|s| Scenario { id: s.id, grouting_kpa: s.grouting_pressure_kpa, face_kpa: s.face_pressure_kpa })
        .collect();

    let text = fs::read_to_string(dir.join(format!("{stem}.csv")))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::invalid("dataset CSV header mismatch"));
    }
    let per_step = grid.len();
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::invalid(format!("CSV line {} has {} columns", n + 2, cols.len())));
        }
        let parse_err = |c: &str| Error::invalid(format!("CSV line {}: cannot parse {c:?}", n + 2));
        let scenario_id: usize = cols[0].parse().map_err(|_| parse_err(cols[0]))?;
        let t_i: usize = cols[1].parse().map_err(|_| parse_err(cols[1]))?;
        let x1: f64 = cols[2].parse().map_err(|_| parse_err(cols[2]))?;
        let x2: f64 = cols[3].parse().map_err(|_| parse_err(cols[3]))?;
        let settlement_mm: f64 = cols[4].parse().map_err(|_| parse_err(cols[4]))?;
        let point_index = n % per_step;
        if grid.points[point_index] != (x1, x2) {
            return Err(Error::invalid(format!("CSV line {}: point ({x1}, {x2}) out of grid order", n + 2)));
        }
        records.push(RawRecord { scenario_id, t_i, point_index, settlement_mm });
    }
    Ok(LowFiData { spec: sidecar.scenario_spec, model: sidecar.ground_model, grid, scenarios, records })
}
