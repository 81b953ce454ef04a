//! Synthetic low-fidelity ground: pressure scenarios, the surface grid and
//! sensor layout, and an analytic causal settlement model standing in for a
//! full tunnelling simulation.

mod dataset;
mod grid;
mod model;
mod scenario;

pub use dataset::{
    gen_lowfi_dataset, read_dataset, write_dataset, LowFiData, RawRecord, CSV_HEADER, DATASET_SCHEMA_VERSION,
};
pub use grid::{make_grid, sensor_layout, validate_sensors, SurfaceGrid};
pub use model::{calibrate_gain, calibrated_model, GroundModel, REFERENCE_MAX_SETTLEMENT_MM};
pub use scenario::{bounded_walk, gen_scenario, Scenario, ScenarioSpec};
