//! The HTTP surface against a small trained checkpoint.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use tunnelfuse_core::causal::{assemble_lowfi, fit_norm};
use tunnelfuse_core::fidelity::{lf_field, lf_predict, train_lowfi, TrainConfig};
use tunnelfuse_core::ground::{gen_lowfi_dataset, sensor_layout, GroundModel, ScenarioSpec, SurfaceGrid};
use tunnelfuse_core::numkit::RngStream;
use tunnelfuse_core::operator_net::Checkpoint;
use tunnelfuse_service::{router, AppState, DriveSession, SiteConfig};

const N_STEPS: usize = 8;

fn grid() -> SurfaceGrid {
    SurfaceGrid::tensor(9, 7, 104.0, 80.0).unwrap()
}

fn ground() -> GroundModel {
    let spec = ScenarioSpec { seed: 21, n_steps: N_STEPS, ..Default::default() };
    GroundModel { face_start_m: -8.0, ..GroundModel::for_spec(&spec) }
}

fn lf() -> Arc<Checkpoint> {
    static LF: OnceLock<Arc<Checkpoint>> = OnceLock::new();
    LF.get_or_init(|| {
        let spec = ScenarioSpec { seed: 21, n_steps: N_STEPS, ..Default::default() };
        let data = gen_lowfi_dataset(&spec, &ground(), 20, &grid()).unwrap();
        let sp = assemble_lowfi(&data, &fit_norm(&data).unwrap()).unwrap();
        let cfg =
            TrainConfig { iterations: 1500, batch_size: Some(256), width: 16, depth: 3, ..TrainConfig::offline() };
        Arc::new(train_lowfi(&sp.train, None, &sp.stats, &cfg).unwrap().checkpoint)
    })
    .clone()
}

fn state() -> AppState {
    let grid = grid();
    let site = SiteConfig {
        sensors: sensor_layout(&grid).unwrap(),
        grid,
        residual: TrainConfig { iterations: 100, width: 16, ..TrainConfig::online() },
        oracle: ground(),
    };
    AppState::new(site, BTreeMap::from([("lf".to_string(), lf())]))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/sessions", Some(json!({ "checkpoint_id": "lf" }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_u64().unwrap().to_string()
}

/// Demo readings for the next step, then the commit.
async fn commit_demo(app: &Router, id: &str, g: f64, f: f64) -> Value {
    let ask = json!({ "grouting_pressure_kpa": g, "face_pressure_kpa": f, "k": 1.2, "sigma_mm": 0.05, "seed": 3 });
    let (status, demo) = call(app, "POST", &format!("/sessions/{id}/demo-readings"), Some(ask)).await;
    assert_eq!(status, StatusCode::OK, "{demo}");
    let commit = json!({ "grouting_pressure_kpa": g, "face_pressure_kpa": f, "readings_mm": demo["readings_mm"] });
    let (status, snap) = call(app, "POST", &format!("/sessions/{id}/steps"), Some(commit)).await;
    assert_eq!(status, StatusCode::OK, "{snap}");
    snap
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn whatif_body(candidates: &[(f64, f64)]) -> Value {
    let c: Vec<Value> =
        candidates.iter().map(|&(g, f)| json!({ "grouting_pressure_kpa": g, "face_pressure_kpa": f })).collect();
    json!({ "candidates": c })
}

#[tokio::test]
async fn health_lists_checkpoints() {
    let app = router(state());
    let (status, body) = call(&app, "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["checkpoints"], json!(["lf"]));
}

#[tokio::test]
async fn new_session_is_the_low_fidelity_field() {
    let app = router(state());
    let id = new_session(&app).await;
    let (status, summary) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["step"], 0);
    assert_eq!(summary["n_steps"], N_STEPS);
    assert_eq!(summary["sensors"].as_array().unwrap().len(), 15);

    let plan = [(170.0, 150.0), (160.0, 140.0)];
    let (status, w) = call(&app, "POST", &format!("/sessions/{id}/whatif"), Some(whatif_body(&plan))).await;
    assert_eq!(status, StatusCode::OK, "{w}");
    let points = grid().points;
    let want = lf_field(&lf(), &[170.0, 160.0], &[150.0, 140.0], 2, &points).unwrap();
    for (p, want) in w["steps"][1]["field"].as_array().unwrap().iter().zip(want) {
        assert_eq!(p["residual_mm"].as_f64().unwrap(), 0.0);
        assert_eq!(p["settlement_mm"].as_f64().unwrap().to_bits(), want.to_bits());
    }
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let app = router(state());
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({ "checkpoint_id": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not-found");
    for uri in ["/sessions/99", "/sessions/abc", "/sessions/99/field"] {
        assert_eq!(call(&app, "GET", uri, None).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn commit_refits_and_records_history() {
    let app = router(state());
    let id = new_session(&app).await;
    let other = new_session(&app).await;
    let first = commit_demo(&app, &id, 170.0, 150.0).await;
    assert_eq!(first["step"], 1);
    assert_eq!(first["field"].as_array().unwrap().len(), grid().len());
    assert!(first["loss_after"].as_f64().unwrap() <= first["loss_before"].as_f64().unwrap());
    let second = commit_demo(&app, &id, 165.0, 145.0).await;
    assert_eq!(second["step"], 2);
    assert!(second["sensor_r2"].as_f64().unwrap() >= second["sensor_r2_lf"].as_f64().unwrap());
    assert!(second["retrain_ms"].as_f64().unwrap() < 60_000.0);

    let (_, summary) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(summary["history"].as_array().unwrap().len(), 2);
    assert_eq!(summary["history"][1]["grouting_pressure_kpa"], 165.0);
    let (_, untouched) = call(&app, "GET", &format!("/sessions/{other}"), None).await;
    assert_eq!(untouched["step"], 0);
}

#[tokio::test]
async fn stored_fields_are_immutable() {
    let app = router(state());
    let id = new_session(&app).await;
    let first = commit_demo(&app, &id, 170.0, 150.0).await;
    let (_, a) = call(&app, "GET", &format!("/sessions/{id}/field?t=1"), None).await;
    commit_demo(&app, &id, 150.0, 130.0).await;
    let (_, b) = call(&app, "GET", &format!("/sessions/{id}/field?t=1"), None).await;
    assert_eq!(a, b);
    assert_eq!(a["field"], first["field"]);
    let (_, latest) = call(&app, "GET", &format!("/sessions/{id}/field"), None).await;
    assert_eq!(latest["step"], 2);
    let (status, body) = call(&app, "GET", &format!("/sessions/{id}/field?t=3"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "validation");
}

#[tokio::test]
async fn tracking_follows_the_committed_steps() {
    let app = router(state());
    let id = new_session(&app).await;
    let pressures = [(170.0, 150.0), (168.0, 152.0), (175.0, 148.0)];
    for &(g, f) in &pressures {
        commit_demo(&app, &id, g, f).await;
    }
    let sensor = sensor_layout(&grid()).unwrap()[4];
    let (x1, x2) = grid().points[sensor];
    let (status, t) = call(&app, "GET", &format!("/sessions/{id}/tracking?x1={x1}&x2={x2}"), None).await;
    assert_eq!(status, StatusCode::OK, "{t}");
    assert_eq!(floats(&t["lf_mm"]).len(), 3);
    assert_eq!(floats(&t["composite_mm"]).len(), 3);
    assert_eq!(floats(&t["measured_mm"]).len(), 3);
    let g: Vec<f64> = pressures.iter().map(|p| p.0).collect();
    let f: Vec<f64> = pressures.iter().map(|p| p.1).collect();
    for (i, v) in floats(&t["lf_mm"]).into_iter().enumerate() {
        assert_eq!(v.to_bits(), lf_predict(&lf(), &g, &f, i + 1, (x1, x2)).unwrap().to_bits());
    }
    let (_, off) = call(&app, "GET", &format!("/sessions/{id}/tracking?x1=40&x2=1.5"), None).await;
    assert!(off["measured_mm"].is_null());
}

#[tokio::test]
async fn bad_commits_are_rejected() {
    let app = router(state());
    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/steps");
    let short = json!({ "grouting_pressure_kpa": 170.0, "face_pressure_kpa": 150.0, "readings_mm": vec![-1.0; 14] });
    let (status, body) = call(&app, "POST", &uri, Some(short)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["message"].as_str().unwrap().contains("missing sensors [14]"), "{body}");

    let mut gap = vec![json!(-1.0); 15];
    gap[3] = Value::Null;
    let (status, body) = call(
        &app,
        "POST",
        &uri,
        Some(json!({ "grouting_pressure_kpa": 170.0, "face_pressure_kpa": 150.0, "readings_mm": gap })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["message"].as_str().unwrap().contains("[3]"), "{body}");

    let out_of_range =
        json!({ "grouting_pressure_kpa": 500.0, "face_pressure_kpa": 150.0, "readings_mm": vec![-1.0; 15] });
    assert_eq!(call(&app, "POST", &uri, Some(out_of_range)).await.0, StatusCode::BAD_REQUEST);
    let (_, summary) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(summary["step"], 0);
}

#[tokio::test]
async fn full_session_conflicts() {
    let app = router(state());
    let id = new_session(&app).await;
    for i in 0..N_STEPS {
        commit_demo(&app, &id, 170.0 - i as f64, 150.0).await;
    }
    let body = json!({ "grouting_pressure_kpa": 170.0, "face_pressure_kpa": 150.0, "readings_mm": vec![-1.0; 15] });
    let (status, err) = call(&app, "POST", &format!("/sessions/{id}/steps"), Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "session-complete");
    let demo = json!({ "grouting_pressure_kpa": 170.0, "face_pressure_kpa": 150.0 });
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/demo-readings"), Some(demo)).await.0, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/whatif"), Some(whatif_body(&[(170.0, 150.0)]))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn whatif_is_a_pure_read() {
    let app = router(state());
    let id = new_session(&app).await;
    commit_demo(&app, &id, 170.0, 150.0).await;
    let uri = format!("/sessions/{id}/whatif");
    let plan = whatif_body(&[(165.0, 145.0), (160.0, 140.0), (158.0, 138.0)]);
    let (s1, a) = call(&app, "POST", &uri, Some(plan.clone())).await;
    let (s2, b) = call(&app, "POST", &uri, Some(plan)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    assert_eq!(a["from_step"], 1);
    assert_eq!(
        a["steps"].as_array().unwrap().iter().map(|s| s["step"].as_u64().unwrap()).collect::<Vec<_>>(),
        [2, 3, 4]
    );
    let (_, summary) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(summary["step"], 1);

    let sensors =
        json!({ "candidates": [{ "grouting_pressure_kpa": 165.0, "face_pressure_kpa": 145.0 }], "points": "sensors" });
    let (_, s) = call(&app, "POST", &uri, Some(sensors)).await;
    assert_eq!(s["steps"][0]["field"].as_array().unwrap().len(), 15);
    let centre = json!({ "candidates": [{ "grouting_pressure_kpa": 165.0, "face_pressure_kpa": 145.0 }], "points": "centerline" });
    let (_, c) = call(&app, "POST", &uri, Some(centre)).await;
    assert_eq!(c["steps"][0]["field"].as_array().unwrap().len(), 9);
}

#[tokio::test]
async fn whatif_horizon_is_bounded() {
    let app = router(state());
    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/whatif");
    assert_eq!(call(&app, "POST", &uri, Some(whatif_body(&[]))).await.0, StatusCode::BAD_REQUEST);
    let too_long = vec![(170.0, 150.0); N_STEPS + 1];
    assert_eq!(call(&app, "POST", &uri, Some(whatif_body(&too_long))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "POST", &uri, Some(whatif_body(&[(100.0, 150.0)]))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "POST", &uri, Some(whatif_body(&[(170.0, 150.0); N_STEPS]))).await.0, StatusCode::OK);
}

#[tokio::test]
async fn demo_readings_are_deterministic() {
    let app = router(state());
    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/demo-readings");
    let ask = json!({ "grouting_pressure_kpa": 170.0, "face_pressure_kpa": 150.0, "sigma_mm": 0.1, "seed": 9 });
    let (_, a) = call(&app, "POST", &uri, Some(ask.clone())).await;
    let (_, b) = call(&app, "POST", &uri, Some(ask)).await;
    assert_eq!(a, b);
    assert_eq!(a["step"], 1);
    assert_eq!(floats(&a["readings_mm"]).len(), 15);
    let bad = json!({ "grouting_pressure_kpa": 170.0, "face_pressure_kpa": 150.0, "sigma_mm": -1.0 });
    assert_eq!(call(&app, "POST", &uri, Some(bad)).await.0, StatusCode::BAD_REQUEST);
}

/// Lower pressures on the candidate steps should deepen the predicted trough.
#[test]
fn lower_candidate_pressures_deepen_settlement() {
    let st = state();
    let site = Arc::clone(&st.site);
    let mut rng = RngStream::new(31);
    let mut deeper = 0;
    for id in 0..20 {
        let session = DriveSession::new(id, "lf".into(), lf(), Arc::clone(&site)).unwrap();
        let h = 2 + rng.below(N_STEPS - 1);
        let plan: Vec<(f64, f64)> = (0..h).map(|_| (rng.uniform(160.0, 220.0), rng.uniform(140.0, 200.0))).collect();
        let lowered: Vec<(f64, f64)> = plan.iter().map(|&(g, f)| (g - 30.0, f - 30.0)).collect();
        let worst = |plan: &[(f64, f64)]| {
            let (_, steps) = session.whatif(plan).unwrap();
            steps.last().unwrap().field.iter().fold(0.0f64, |m, p| m.max(p.total_mm.abs()))
        };
        if worst(&lowered) > worst(&plan) {
            deeper += 1;
        }
    }
    assert!(deeper >= 18, "{deeper}/20 sessions deepened");
}

/// Readers racing a commit see the old state or the new one, never a mix.
#[test]
fn readers_never_see_a_partial_commit() {
    let st = state();
    let session = Arc::new(DriveSession::new(1, "lf".into(), lf(), Arc::clone(&st.site)).unwrap());
    let readings = session.demo_readings(170.0, 150.0, 1.0, 0.0, 0).unwrap();
    let reader = {
        let session = Arc::clone(&session);
        std::thread::spawn(move || {
            for _ in 0..2000 {
                let s = session.snapshot();
                assert_eq!(s.steps.len(), s.snapshots.len());
                if let Some(last) = s.snapshots.last() {
                    assert!(Arc::ptr_eq(&last.model, &s.model));
                }
            }
        })
    };
    session.commit_step(170.0, 150.0, readings).unwrap();
    reader.join().unwrap();
    assert_eq!(session.snapshot().step(), 1);
}
