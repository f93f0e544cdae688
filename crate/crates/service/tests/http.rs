use std::path::PathBuf;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use mediaprof_core::ingest::{
    generate_synthetic, ingest, AppConfig, PeriodMap, SyntheticConfig, Workspace, SCRIPT_FILE,
};
use mediaprof_core::llm::{Script, ScriptedBackend};
use mediaprof_core::rgcn::{train_classification, RgcnConfig, RgcnModel};
use mediaprof_core::session::{
    run_protocol, Interactor, PendingValidation, Schedule, SessionState, SimulatedInteractor,
};
use mediaprof_service::{router, AppState, ServiceConfig};

struct Fixture {
    tmp: TempDir,
    work: PathBuf,
}

/// A trained workspace, or an untrained one when `train` is false.
fn fixture(train: bool) -> Fixture {
    let tmp = TempDir::new().unwrap();
    let work = tmp.path().join("work");
    let data = generate_synthetic(&SyntheticConfig {
        communities: 3,
        users_per_community: 10,
        sources_per_community: 4,
        feature_dim: 8,
        p_in: 0.4,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let ds = ingest(&data.records, &PeriodMap::default()).unwrap();
    let mut ws = Workspace::from_dataset(&work, ds);
    if train {
        let mut model = RgcnModel::new(RgcnConfig {
            input_dim: 8,
            hidden: 8,
            layers: 2,
            lr: 0.01,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        train_classification(&ws.graph, &mut model, 20).unwrap();
        ws.model = Some(model);
    }
    ws.save(&work).unwrap();
    data.script.save(&work.join(SCRIPT_FILE)).unwrap();
    Fixture { tmp, work }
}

fn service(f: &Fixture, token: Option<&str>) -> (AppState, Router) {
    let mut app = AppConfig::default();
    app.service.sessions_dir = "sessions".into();
    app.service.workspace = Some(f.work.display().to_string());
    app.service.token = token.map(str::to_string);
    app.model.rgcn.hidden = 8;
    app.model.rgcn.layers = 2;
    app.model.rgcn.lr = 0.01;
    app.model.epochs = 10;
    let state = AppState::new(ServiceConfig {
        app,
        base: f.tmp.path().to_path_buf(),
    });
    (state.clone(), router(state))
}

async fn call_with(app: &Router, method: &str, uri: &str, body: Option<&str>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = req
        .header("content-type", "application/json")
        .body(Body::from(body.unwrap_or("").to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let text = body.map(|b| b.to_string());
    call_with(app, method, uri, text.as_deref(), None).await
}

fn session_config(seed: u64) -> Value {
    json!({
        "clustering": { "k": 4, "m": 3 },
        "session": { "seed": seed, "fine_tune": { "epochs": 3 } },
    })
}

async fn create(app: &Router, seed: u64) -> String {
    let (code, v) = call(
        app,
        "POST",
        "/sessions",
        Some(json!({ "schema_version": 1, "config": session_config(seed) })),
    )
    .await;
    assert_eq!(code, StatusCode::CREATED, "{v}");
    assert_eq!(v["schema_version"], 1);
    v["id"].as_str().unwrap().to_string()
}

async fn pending(app: &Router, id: &str) -> Vec<PendingValidation> {
    let (code, v) = call(app, "GET", &format!("/sessions/{id}/pending"), None).await;
    assert_eq!(code, StatusCode::OK);
    serde_json::from_value(v["pending"].clone()).unwrap()
}

async fn wait_for(app: &Router, id: &str, status: &str) -> Value {
    for _ in 0..600 {
        let (_, v) = call(app, "GET", &format!("/sessions/{id}"), None).await;
        if v["status"] == status {
            return v;
        }
        assert_ne!(v["status"], "Failed", "{v}");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("session {id} never reached {status}");
}

fn accept_all(p: &PendingValidation) -> Value {
    json!({ "schema_version": 1, "validation": p.id, "accepted": p.candidates })
}

#[tokio::test]
async fn decision_removes_one_pending_validation() {
    let f = fixture(true);
    let (_, app) = service(&f, None);
    let id = create(&app, 1).await;
    let before = pending(&app, &id).await;
    assert!(!before.is_empty());
    let (code, v) = call(&app, "POST", &format!("/sessions/{id}/decision"), Some(accept_all(&before[0]))).await;
    assert_eq!(code, StatusCode::OK, "{v}");
    assert!(v["counters"].is_object());
    let after = pending(&app, &id).await;
    assert_eq!(after.len(), before.len() - 1);
    assert!(after.iter().all(|p| p.id != before[0].id));
}

#[tokio::test]
async fn decisions_are_exactly_once() {
    let f = fixture(true);
    let (_, app) = service(&f, None);
    let id = create(&app, 2).await;
    let p = pending(&app, &id).await.remove(0);
    let uri = format!("/sessions/{id}/decision");
    let body = accept_all(&p);
    let (a, b) = tokio::join!(call(&app, "POST", &uri, Some(body.clone())), call(&app, "POST", &uri, Some(body)));
    assert_eq!((a.0, b.0), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a.1["outcome"], b.1["outcome"]);
    let (_, log) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
    let applied = log["events"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["event"] == "decision_applied")
        .count();
    assert_eq!(applied, 1, "{log}");

    let conflicting = json!({ "schema_version": 1, "validation": p.id, "accepted": [] });
    let (code, v) = call(&app, "POST", &uri, Some(conflicting)).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "conflict");
    let (code, v) = call(&app, "POST", &uri, Some(json!({ "schema_version": 1, "validation": 999, "accepted": [] }))).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "unknown_validation");
}

#[tokio::test]
async fn malformed_bodies_get_field_errors() {
    let f = fixture(true);
    let (_, app) = service(&f, None);
    let id = create(&app, 3).await;
    let uri = format!("/sessions/{id}/decision");
    let (code, v) = call(&app, "POST", &uri, Some(json!({ "schema_version": 1, "validation": 0 }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["fields"][0]["field"], "accepted");
    let (code, v) = call_with(&app, "POST", &uri, Some("{not json"), None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "malformed_json");
    let (code, v) = call(&app, "POST", &uri, Some(json!({ "validation": 0, "accepted": [] }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["fields"][0]["field"], "schema_version");
    let (code, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({ "schema_version": 1, "config": { "clustering": { "k": "many" } } })),
    )
    .await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["fields"][0]["field"], "config.clustering.k");
    let (code, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let (code, v) = call(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "not_finalized");
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let f = fixture(true);
    let (_, app) = service(&f, Some("secret"));
    let (code, v) = call_with(&app, "GET", "/sessions", None, None).await;
    assert_eq!(code, StatusCode::UNAUTHORIZED);
    assert_eq!(v["error"]["code"], "unauthorized");
    let (code, _) = call_with(&app, "GET", "/sessions", None, Some("wrong")).await;
    assert_eq!(code, StatusCode::UNAUTHORIZED);
    let (code, v) = call_with(&app, "GET", "/sessions", None, Some("secret")).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(v["sessions"], json!([]));
}

/// Drives the schedule over HTTP in the order `run_protocol` uses.
async fn http_protocol(app: &Router, id: &str, schedule: Schedule, human: &mut SimulatedInteractor, dummy: &SessionState) {
    for i in 0..schedule.interactions {
        if i > 0 {
            let (code, v) = call(app, "POST", &format!("/sessions/{id}/rounds"), Some(json!({ "schema_version": 1 }))).await;
            assert_eq!(code, StatusCode::OK, "{v}");
        }
        let ps = pending(app, id).await;
        if ps.is_empty() {
            break;
        }
        for p in &ps {
            let d = human.decide(dummy, p).unwrap();
            let body = json!({ "schema_version": 1, "validation": d.validation, "accepted": d.accepted, "rejected": d.rejected });
            let (code, v) = call(app, "POST", &format!("/sessions/{id}/decision"), Some(body)).await;
            assert_eq!(code, StatusCode::OK, "{v}");
        }
        for _ in 0..schedule.expansions {
            let (_, v) = call(app, "GET", &format!("/sessions/{id}/communities"), None).await;
            for c in v["communities"].as_array().unwrap() {
                let body = json!({ "schema_version": 1, "community": c["id"], "rounds": 1 });
                let (code, v) = call(app, "POST", &format!("/sessions/{id}/expand"), Some(body)).await;
                assert!(code == StatusCode::OK || code == StatusCode::CONFLICT, "{v}");
            }
        }
    }
}

#[tokio::test]
async fn http_loop_matches_in_process_protocol() {
    let f = fixture(true);
    let (_, app) = service(&f, None);
    let id = create(&app, 4).await;
    let dir = f.tmp.path().join("sessions").join(&id);
    let cfg = AppConfig::load(&dir.join("config.toml")).unwrap();
    assert_eq!(cfg.clustering.k, 4);
    assert_eq!(cfg.session.seed, 4);
    let ws = Workspace::load(&f.work).unwrap();
    let model = ws.model().unwrap().clone();
    let fresh = || SessionState::new(ws.graph.clone(), model.clone(), ws.texts.clone(), cfg.session_config()).unwrap();
    let schedule = Schedule {
        interactions: 2,
        expansions: 1,
    };

    let dummy = fresh();
    let mut human = SimulatedInteractor::new(&ws.graph, cfg.session.task);
    http_protocol(&app, &id, schedule, &mut human, &dummy).await;
    let (code, v) = call(&app, "POST", &format!("/sessions/{id}/finalize"), Some(json!({ "schema_version": 1 }))).await;
    assert_eq!(code, StatusCode::ACCEPTED, "{v}");
    let status = wait_for(&app, &id, "Finalized").await;
    let (code, report) = call(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(code, StatusCode::OK);

    let backend = ScriptedBackend::new(Script::load(&f.work.join(SCRIPT_FILE)).unwrap());
    let mut state = fresh();
    let mut reference = SimulatedInteractor::new(&ws.graph, cfg.session.task);
    let reports = run_protocol(&mut state, schedule, &mut reference, &backend, "interactive").unwrap();
    assert_eq!(report["report"], serde_json::to_value(&reports).unwrap());
    assert_eq!(status["state_hash"], json!(state.state_hash()));
    assert_eq!(report["counters"], serde_json::to_value(state.counters()).unwrap());
    assert!(dir.join("report.csv").exists());
}

#[tokio::test]
async fn untrained_workspace_trains_in_the_background() {
    let f = fixture(false);
    let (_, app) = service(&f, None);
    let (code, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({ "schema_version": 1, "config": session_config(5) })),
    )
    .await;
    assert_eq!(code, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["status"], "Training");
    let id = v["id"].as_str().unwrap();
    wait_for(&app, id, "AwaitingDecision").await;
    assert!(!pending(&app, id).await.is_empty());
}

#[tokio::test]
async fn saved_sessions_are_restored() {
    let f = fixture(true);
    let (_, app) = service(&f, None);
    let id = create(&app, 6).await;
    let p = pending(&app, &id).await.remove(0);
    call(&app, "POST", &format!("/sessions/{id}/decision"), Some(accept_all(&p))).await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let (_, again) = service(&f, None);
    let (code, after) = call(&again, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(before["state_hash"], after["state_hash"]);
    assert_eq!(before["counters"], after["counters"]);
}
