use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use tunnelfuse_core::fidelity::PredictionParts;
use tunnelfuse_core::operator_net::Checkpoint;

use crate::error::ServiceError;
use crate::session::{DriveSession, SiteConfig, Snapshot};

/// Shared state behind the router.
#[derive(Debug)]
pub struct AppState {
    pub site: Arc<SiteConfig>,
    checkpoints: BTreeMap<String, Arc<Checkpoint>>,
    sessions: RwLock<HashMap<u64, Arc<DriveSession>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(site: SiteConfig, checkpoints: BTreeMap<String, Arc<Checkpoint>>) -> Self {
        Self { site: Arc::new(site), checkpoints, sessions: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1) }
    }

    pub fn create_session(&self, checkpoint_id: &str) -> Result<Arc<DriveSession>, ServiceError> {
        let lf = self
            .checkpoints
            .get(checkpoint_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown checkpoint {checkpoint_id:?}")))?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let session =
            Arc::new(DriveSession::new(id, checkpoint_id.to_string(), Arc::clone(lf), Arc::clone(&self.site))?);
        self.sessions.write().expect("session map poisoned").insert(id, Arc::clone(&session));
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<Arc<DriveSession>, ServiceError> {
        let not_found = || ServiceError::NotFound(format!("unknown session {id:?}"));
        let key: u64 = id.parse().map_err(|_| not_found())?;
        self.sessions.read().expect("session map poisoned").get(&key).cloned().ok_or_else(not_found)
    }
}

type Shared = Arc<AppState>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_summary))
        .route("/sessions/{id}/steps", post(commit_step))
        .route("/sessions/{id}/whatif", post(whatif))
        .route("/sessions/{id}/field", get(field))
        .route("/sessions/{id}/tracking", get(tracking))
        .route("/sessions/{id}/demo-readings", post(demo_readings))
        .with_state(Arc::new(state))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorJson {
    pub index: usize,
    pub x1_m: f64,
    pub x2_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPointJson {
    pub x1_m: f64,
    pub x2_m: f64,
    pub settlement_mm: f64,
    pub lf_settlement_mm: f64,
    pub residual_mm: f64,
}

fn field_json(points: &[(f64, f64)], parts: &[PredictionParts]) -> Vec<FieldPointJson> {
    points
        .iter()
        .zip(parts)
        .map(|(&(x1_m, x2_m), p)| FieldPointJson {
            x1_m,
            x2_m,
            settlement_mm: p.total_mm,
            lf_settlement_mm: p.lf_mm,
            residual_mm: p.residual_mm,
        })
        .collect()
}

fn max_abs(parts: &[PredictionParts]) -> f64 {
    parts.iter().fold(0.0, |m, p| m.max(p.total_mm.abs()))
}

async fn healthz(State(app): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "checkpoints": app.checkpoints.keys().collect::<Vec<_>>() }))
}

#[derive(Debug, Deserialize)]
pub struct CreateSessionRequest {
    pub checkpoint_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub grouting_pressure_kpa: f64,
    pub face_pressure_kpa: f64,
    pub sensor_r2: Option<f64>,
    pub sensor_r2_lf: Option<f64>,
    pub retrain_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: u64,
    pub checkpoint_id: String,
    pub step: usize,
    pub n_steps: usize,
    pub grouting_bounds_kpa: (f64, f64),
    pub face_bounds_kpa: (f64, f64),
    pub sensors: Vec<SensorJson>,
    pub grid_points: Vec<(f64, f64)>,
    pub history: Vec<StepSummary>,
}

fn summary(s: &DriveSession) -> SessionSummary {
    let state = s.snapshot();
    let site = s.site();
    SessionSummary {
        session_id: s.id,
        checkpoint_id: s.checkpoint_id.clone(),
        step: state.step(),
        n_steps: s.n_steps(),
        grouting_bounds_kpa: (s.lf.norm.grouting.min, s.lf.norm.grouting.max),
        face_bounds_kpa: (s.lf.norm.face.min, s.lf.norm.face.max),
        sensors: site
            .sensors
            .iter()
            .map(|&i| SensorJson { index: i, x1_m: site.grid.points[i].0, x2_m: site.grid.points[i].1 })
            .collect(),
        grid_points: site.grid.points.clone(),
        history: state
            .steps
            .iter()
            .zip(&state.snapshots)
            .map(|(c, snap)| StepSummary {
                step: snap.step,
                grouting_pressure_kpa: c.grouting_kpa,
                face_pressure_kpa: c.face_kpa,
                sensor_r2: snap.sensor_r2,
                sensor_r2_lf: snap.sensor_r2_lf,
                retrain_ms: snap.retrain.as_secs_f64() * 1e3,
            })
            .collect(),
    }
}

async fn create_session(
    State(app): State<Shared>,
    Json(req): Json<CreateSessionRequest>,
) -> Result<(StatusCode, Json<SessionSummary>), ServiceError> {
    let session = app.create_session(&req.checkpoint_id)?;
    Ok((StatusCode::CREATED, Json(summary(&session))))
}

async fn session_summary(
    State(app): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<SessionSummary>, ServiceError> {
    let session = app.session(&id)?;
    Ok(Json(summary(&session)))
}

#[derive(Debug, Deserialize)]
pub struct CommitRequest {
    pub grouting_pressure_kpa: f64,
    pub face_pressure_kpa: f64,
    /// One value per sensor, in sensor order; `null` marks a missing reading.
    pub readings_mm: Vec<Option<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SnapshotResponse {
    pub step: usize,
    pub sensor_r2: Option<f64>,
    pub sensor_r2_lf: Option<f64>,
    pub loss_before: f64,
    pub loss_after: f64,
    pub retrain_ms: f64,
    pub max_abs_settlement_mm: f64,
    pub field: Vec<FieldPointJson>,
}

fn snapshot_json(site: &SiteConfig, snap: &Snapshot) -> SnapshotResponse {
    SnapshotResponse {
        step: snap.step,
        sensor_r2: snap.sensor_r2,
        sensor_r2_lf: snap.sensor_r2_lf,
        loss_before: snap.loss_before,
        loss_after: snap.loss_after,
        retrain_ms: snap.retrain.as_secs_f64() * 1e3,
        max_abs_settlement_mm: max_abs(&snap.field),
        field: field_json(&site.grid.points, &snap.field),
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn commit_step(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<CommitRequest>,
) -> Result<Json<SnapshotResponse>, ServiceError> {
    let session = app.session(&id)?;
    let readings = req.readings_mm.iter().map(|r| r.unwrap_or(f64::NAN)).collect();
    let outcome = blocking({
        let session = Arc::clone(&session);
        move || session.commit_step(req.grouting_pressure_kpa, req.face_pressure_kpa, readings)
    })
    .await?;
    Ok(Json(snapshot_json(session.site(), &outcome.snapshot)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSelector {
    #[default]
    Full,
    Sensors,
    Centerline,
}

#[derive(Debug, Deserialize)]
pub struct PressurePair {
    pub grouting_pressure_kpa: f64,
    pub face_pressure_kpa: f64,
}

#[derive(Debug, Deserialize)]
pub struct WhatIfRequest {
    pub candidates: Vec<PressurePair>,
    #[serde(default)]
    pub points: GridSelector,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WhatIfStepJson {
    pub step: usize,
    pub max_abs_settlement_mm: f64,
    pub field: Vec<FieldPointJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub from_step: usize,
    pub steps: Vec<WhatIfStepJson>,
}

async fn whatif(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<WhatIfRequest>,
) -> Result<Json<WhatIfResponse>, ServiceError> {
    let session = app.session(&id)?;
    let candidates: Vec<(f64, f64)> =
        req.candidates.iter().map(|c| (c.grouting_pressure_kpa, c.face_pressure_kpa)).collect();
    let (from_step, steps) = blocking({
        let session = Arc::clone(&session);
        move || session.whatif(&candidates)
    })
    .await?;
    let site = session.site();
    let keep: Vec<usize> = match req.points {
        GridSelector::Full => (0..site.grid.len()).collect(),
        GridSelector::Sensors => site.sensors.clone(),
        GridSelector::Centerline => site.grid.centerline().unwrap_or_default(),
    };
    let points: Vec<(f64, f64)> = keep.iter().map(|&i| site.grid.points[i]).collect();
    let steps = steps
        .into_iter()
        .map(|s| {
            let parts: Vec<PredictionParts> = keep.iter().map(|&i| s.field[i]).collect();
            WhatIfStepJson {
                step: s.step,
                max_abs_settlement_mm: max_abs(&s.field),
                field: field_json(&points, &parts),
            }
        })
        .collect();
    Ok(Json(WhatIfResponse { from_step, steps }))
}

#[derive(Debug, Deserialize)]
pub struct FieldQuery {
    pub t: Option<usize>,
}

async fn field(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<FieldQuery>,
) -> Result<Json<SnapshotResponse>, ServiceError> {
    let session = app.session(&id)?;
    let snap = session.field(q.t)?;
    Ok(Json(snapshot_json(session.site(), &snap)))
}

#[derive(Debug, Deserialize)]
pub struct TrackingQuery {
    pub x1: f64,
    pub x2: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackingResponse {
    pub x1_m: f64,
    pub x2_m: f64,
    pub steps: Vec<usize>,
    pub lf_mm: Vec<f64>,
    pub composite_mm: Vec<f64>,
    /// Present when the point is a sensor.
    pub measured_mm: Option<Vec<f64>>,
}

async fn tracking(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<TrackingQuery>,
) -> Result<Json<TrackingResponse>, ServiceError> {
    let session = app.session(&id)?;
    let t = blocking(move || session.tracking((q.x1, q.x2))).await?;
    Ok(Json(TrackingResponse {
        x1_m: t.point.0,
        x2_m: t.point.1,
        steps: t.steps,
        lf_mm: t.lf_mm,
        composite_mm: t.composite_mm,
        measured_mm: t.measured_mm,
    }))
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
pub struct DemoReadingsRequest {
    pub grouting_pressure_kpa: f64,
    pub face_pressure_kpa: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default)]
    pub sigma_mm: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DemoReadingsResponse {
    pub step: usize,
    pub readings_mm: Vec<f64>,
}

async fn demo_readings(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<DemoReadingsRequest>,
) -> Result<Json<DemoReadingsResponse>, ServiceError> {
    let session = app.session(&id)?;
    let step = session.snapshot().step() + 1;
    let readings_mm =
        session.demo_readings(req.grouting_pressure_kpa, req.face_pressure_kpa, req.k, req.sigma_mm, req.seed)?;
    Ok(Json(DemoReadingsResponse { step, readings_mm }))
}
