//! Drive-session service: online residual refits and field reconstruction over HTTP.
//!
//! | method | path | purpose |
//! |--------|------|---------|
//! | GET  | `/healthz` | liveness and available checkpoints |
//! | POST | `/sessions` | `{checkpoint_id}` → new session at step 0 |
//! | GET  | `/sessions/{id}` | summary, sensors, grid, per-step history |
//! | POST | `/sessions/{id}/steps` | commit pressures and readings, refit, return the field |
//! | POST | `/sessions/{id}/whatif` | fields for candidate future pressures, no mutation |
//! | GET  | `/sessions/{id}/field?t=` | reconstruction stored at step `t` |
//! | GET  | `/sessions/{id}/tracking?x1=&x2=` | lf / composite / measured history at a point |
//! | POST | `/sessions/{id}/demo-readings` | synthetic readings for the next step |
//!
//! Errors are `{error, message}` with 400 for validation, 404 for unknown ids
//! and 409 once a session holds every step.

mod api;
mod error;
mod session;

pub use api::{
    router, AppState, CommitRequest, CreateSessionRequest, DemoReadingsRequest, DemoReadingsResponse, FieldPointJson,
    GridSelector, PressurePair, SensorJson, SessionSummary, SnapshotResponse, StepSummary, TrackingResponse,
    WhatIfRequest, WhatIfResponse, WhatIfStepJson,
};
pub use error::ServiceError;
pub use session::{
    CommitOutcome, CommittedStep, DriveSession, SessionState, SiteConfig, Snapshot, Tracking, WhatIfStep,
};

/// Serves `state` on `addr` until the process stops.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
