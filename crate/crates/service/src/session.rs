use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use tunnelfuse_core::causal::{assemble_hifi, synthesize_hifi, HfSpec};
use tunnelfuse_core::eval::r2;
use tunnelfuse_core::fidelity::{
    lf_field, predict_field, train_residual, CompositeModel, PredictionParts, TrainConfig,
};
use tunnelfuse_core::ground::{GroundModel, Scenario, SurfaceGrid};
use tunnelfuse_core::operator_net::Checkpoint;

use crate::error::ServiceError;

/// Monitoring setup shared by every session of a service.
#[derive(Debug, Clone)]
pub struct SiteConfig {
    pub grid: SurfaceGrid,
    /// Sensor grid indices.
    pub sensors: Vec<usize>,
    pub residual: TrainConfig,
    /// Reference ground model used to fabricate demo readings.
    pub oracle: GroundModel,
}

impl SiteConfig {
    pub fn sensor_points(&self) -> Vec<(f64, f64)> {
        self.sensors.iter().map(|&i| self.grid.points[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommittedStep {
    pub grouting_kpa: f64,
    pub face_kpa: f64,
    pub readings_mm: Vec<f64>,
}

/// Model and reconstruction produced when a step was committed.
#[derive(Debug)]
pub struct Snapshot {
    pub step: usize,
    pub model: Arc<CompositeModel>,
    pub field: Vec<PredictionParts>,
    /// Composite vs readings at the sensors over all committed steps.
    pub sensor_r2: Option<f64>,
    pub sensor_r2_lf: Option<f64>,
    pub loss_before: f64,
    pub loss_after: f64,
    pub retrain: Duration,
}

/// Immutable view of a session; commits publish a new one.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub steps: Vec<CommittedStep>,
    pub snapshots: Vec<Arc<Snapshot>>,
    /// Model in force: the latest snapshot's, or the zero-residual composite.
    pub model: Arc<CompositeModel>,
}

impl SessionState {
    pub fn step(&self) -> usize {
        self.steps.len()
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            id: 0,
            grouting_kpa: self.steps.iter().map(|s| s.grouting_kpa).collect(),
            face_kpa: self.steps.iter().map(|s| s.face_kpa).collect(),
        }
    }
}

/// One tunnel drive: append-only committed steps plus archived models.
///
/// Readers take a cheap `Arc` of the current state and never block on a
/// retrain; commits are serialised by `writer` and swap the state at the end.
#[derive(Debug)]
pub struct DriveSession {
    pub id: u64,
    pub checkpoint_id: String,
    pub lf: Arc<Checkpoint>,
    site: Arc<SiteConfig>,
    state: RwLock<Arc<SessionState>>,
    writer: Mutex<()>,
}

/// Outcome of a commit.
#[derive(Debug, Clone)]
pub struct CommitOutcome {
    pub snapshot: Arc<Snapshot>,
}

/// Predicted field after one hypothetical future step.
#[derive(Debug, Clone)]
pub struct WhatIfStep {
    pub step: usize,
    pub field: Vec<PredictionParts>,
}

/// Settlement history at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracking {
    pub point: (f64, f64),
    pub steps: Vec<usize>,
    pub lf_mm: Vec<f64>,
    /// Value reconstructed when each step was committed.
    pub composite_mm: Vec<f64>,
    pub measured_mm: Option<Vec<f64>>,
}

fn check_pressures(lf: &Checkpoint, pairs: &[(f64, f64)]) -> Result<(), ServiceError> {
    let (g, f) = (lf.norm.grouting, lf.norm.face);
    for (i, &(pg, ps)) in pairs.iter().enumerate() {
        if !(pg.is_finite() && pg >= g.min && pg <= g.max) {
            return Err(ServiceError::Validation(format!(
                "entry {i}: grouting pressure {pg} kPa outside [{}, {}]",
                g.min, g.max
            )));
        }
        if !(ps.is_finite() && ps >= f.min && ps <= f.max) {
            return Err(ServiceError::Validation(format!(
                "entry {i}: face pressure {ps} kPa outside [{}, {}]",
                f.min, f.max
            )));
        }
    }
    Ok(())
}

impl DriveSession {
    pub fn new(
        id: u64,
        checkpoint_id: String,
        lf: Arc<Checkpoint>,
        site: Arc<SiteConfig>,
    ) -> Result<Self, ServiceError> {
        let zero = CompositeModel::zero_residual(Arc::clone(&lf), site.residual.width, site.residual.depth)?;
        let state = SessionState { steps: Vec::new(), snapshots: Vec::new(), model: Arc::new(zero) };
        Ok(Self { id, checkpoint_id, lf, site, state: RwLock::new(Arc::new(state)), writer: Mutex::new(()) })
    }

    pub fn n_steps(&self) -> usize {
        self.lf.norm.n_steps
    }

    pub fn site(&self) -> &SiteConfig {
        &self.site
    }

    pub fn snapshot(&self) -> Arc<SessionState> {
        Arc::clone(&self.state.read().expect("session lock poisoned"))
    }

    /// Appends a step, refits the residual on every reading so far and
    /// publishes the new model.
    pub fn commit_step(
        &self,
        grouting_kpa: f64,
        face_kpa: f64,
        readings_mm: Vec<f64>,
    ) -> Result<CommitOutcome, ServiceError> {
        let _writer = self.writer.lock().expect("session writer poisoned");
        let current = self.snapshot();
        let t_n = current.step() + 1;
        if t_n > self.n_steps() {
            return Err(ServiceError::SessionComplete(format!(
                "session {} already holds all {} steps",
                self.id,
                self.n_steps()
            )));
        }
        check_pressures(&self.lf, &[(grouting_kpa, face_kpa)])?;
        let n_sensors = self.site.sensors.len();
        let missing: Vec<usize> =
            (0..n_sensors).filter(|&k| !readings_mm.get(k).is_some_and(|v| v.is_finite())).collect();
        if !missing.is_empty() || readings_mm.len() != n_sensors {
            return Err(ServiceError::Validation(format!(
                "expected {n_sensors} finite readings, got {}; missing sensors {missing:?}",
                readings_mm.len()
            )));
        }

        let mut steps = current.steps.clone();
        steps.push(CommittedStep { grouting_kpa, face_kpa, readings_mm });
        let scenario = Scenario {
            id: 0,
            grouting_kpa: steps.iter().map(|s| s.grouting_kpa).collect(),
            face_kpa: steps.iter().map(|s| s.face_kpa).collect(),
        };
        let rows: Vec<Vec<f64>> = steps.iter().map(|s| s.readings_mm.clone()).collect();
        let hf = assemble_hifi(&scenario, &self.site.sensor_points(), &rows, t_n, &self.lf.norm)?;
        let run = train_residual(&hf, Arc::clone(&self.lf), &self.site.residual)?;
        let model = Arc::new(run.model);

        let field = predict_field(&model, &scenario.grouting_kpa, &scenario.face_kpa, t_n, &self.site.grid.points)?;
        let (sensor_r2, sensor_r2_lf) = self.sensor_fit(&model, &scenario, &rows)?;
        let snapshot = Arc::new(Snapshot {
            step: t_n,
            model: Arc::clone(&model),
            field,
            sensor_r2,
            sensor_r2_lf,
            loss_before: run.initial_loss,
            loss_after: run.history.final_loss().unwrap_or(run.initial_loss),
            retrain: run.elapsed,
        });
        let mut snapshots = current.snapshots.clone();
        snapshots.push(Arc::clone(&snapshot));
        let next = Arc::new(SessionState { steps, snapshots, model });
        *self.state.write().expect("session lock poisoned") = next;
        Ok(CommitOutcome { snapshot })
    }

    /// R² of composite and low-fidelity predictions against all readings so far.
    fn sensor_fit(
        &self,
        model: &CompositeModel,
        scenario: &Scenario,
        rows: &[Vec<f64>],
    ) -> Result<(Option<f64>, Option<f64>), ServiceError> {
        let points = self.site.sensor_points();
        let (mut pred, mut lf, mut meas) = (Vec::new(), Vec::new(), Vec::new());
        for (t, row) in rows.iter().enumerate() {
            let p = predict_field(model, &scenario.grouting_kpa, &scenario.face_kpa, t + 1, &points)?;
            pred.extend(p.iter().map(|p| p.total_mm));
            lf.extend(p.iter().map(|p| p.lf_mm));
            meas.extend_from_slice(row);
        }
        Ok((r2(&pred, &meas).ok(), r2(&lf, &meas).ok()))
    }

    /// Fields after each candidate step, using the model in force. Pure read.
    pub fn whatif(&self, candidates: &[(f64, f64)]) -> Result<(usize, Vec<WhatIfStep>), ServiceError> {
        let state = self.snapshot();
        let t = state.step();
        let room = self.n_steps() - t;
        if candidates.is_empty() || candidates.len() > room {
            return Err(ServiceError::Validation(format!(
                "horizon must be between 1 and {room} steps, got {}",
                candidates.len()
            )));
        }
        check_pressures(&self.lf, candidates)?;
        let mut scenario = state.scenario();
        scenario.grouting_kpa.extend(candidates.iter().map(|c| c.0));
        scenario.face_kpa.extend(candidates.iter().map(|c| c.1));
        let mut out = Vec::with_capacity(candidates.len());
        for step in t + 1..=t + candidates.len() {
            let field =
                predict_field(&state.model, &scenario.grouting_kpa, &scenario.face_kpa, step, &self.site.grid.points)?;
            out.push(WhatIfStep { step, field });
        }
        Ok((t, out))
    }

    /// Reconstruction stored when step `t` was committed.
    pub fn field(&self, t: Option<usize>) -> Result<Arc<Snapshot>, ServiceError> {
        let state = self.snapshot();
        let current = state.step();
        let t = t.unwrap_or(current);
        if t == 0 || t > current {
            return Err(ServiceError::Validation(format!("step {t} not available; committed steps are 1..={current}")));
        }
        Ok(Arc::clone(&state.snapshots[t - 1]))
    }

    pub fn tracking(&self, point: (f64, f64)) -> Result<Tracking, ServiceError> {
        if !(point.0.is_finite() && point.1.is_finite()) {
            return Err(ServiceError::Validation("tracking point must be finite".into()));
        }
        let state = self.snapshot();
        let scenario = state.scenario();
        let n = state.step();
        let mut lf_mm = Vec::with_capacity(n);
        let mut composite_mm = Vec::with_capacity(n);
        for (t, snap) in (1..=n).zip(&state.snapshots) {
            lf_mm.push(lf_field(&self.lf, &scenario.grouting_kpa, &scenario.face_kpa, t, &[point])?[0]);
            let p = predict_field(&snap.model, &scenario.grouting_kpa, &scenario.face_kpa, t, &[point])?;
            composite_mm.push(p[0].total_mm);
        }
        let sensor = self.site.sensor_points().iter().position(|&p| p == point);
        let measured_mm = sensor.map(|k| state.steps.iter().map(|s| s.readings_mm[k]).collect());
        Ok(Tracking { point, steps: (1..=n).collect(), lf_mm, composite_mm, measured_mm })
    }

    /// Synthetic readings for the next step from the reference ground model.
    pub fn demo_readings(
        &self,
        grouting_kpa: f64,
        face_kpa: f64,
        k: f64,
        sigma_mm: f64,
        seed: u64,
    ) -> Result<Vec<f64>, ServiceError> {
        let state = self.snapshot();
        if state.step() >= self.n_steps() {
            return Err(ServiceError::SessionComplete(format!("session {} is complete", self.id)));
        }
        check_pressures(&self.lf, &[(grouting_kpa, face_kpa)])?;
        let mut scenario = state.scenario();
        scenario.grouting_kpa.push(grouting_kpa);
        scenario.face_kpa.push(face_kpa);
        let t = scenario.n_steps();
        let clean: Vec<f64> = self
            .site
            .sensor_points()
            .iter()
            .map(|&p| self.site.oracle.settlement(&scenario, p, t))
            .collect::<Result<_, _>>()?;
        let spec = HfSpec { k, sigma_mm, seed: seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) };
        spec.validate().map_err(|e| ServiceError::Validation(e.to_string()))?;
        Ok(synthesize_hifi(&clean, &spec)?)
    }
}
