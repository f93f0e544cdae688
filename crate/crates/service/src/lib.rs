//! HTTP facade over interactive validation sessions. JSON in and out, every
//! body carries `schema_version`. Finalizing, and creating a session over an
//! untrained workspace, run in the background; poll `GET /sessions/{id}`.

pub mod api;
pub mod sessions;

use std::sync::Arc;

use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use mediaprof_core::ingest::WORK_GRAPH_FILE;
use mediaprof_core::session::{Decider, HumanDecision};

pub use api::{ApiError, ApiStatus, SCHEMA_VERSION};
use api::{Body, CreateSession, DecisionRequest, EmptyRequest, ExpandRequest, FinalizeRequest};
pub use sessions::{Registry, ServiceConfig, View};
use sessions::{create_state, ApiSession};

type ApiResult = Result<Response, ApiError>;

pub struct Inner {
    pub config: ServiceConfig,
    pub registry: Registry,
}

#[derive(Clone)]
pub struct AppState(pub Arc<Inner>);

impl AppState {
    /// Service state with the saved sessions of the sessions directory
    /// reopened.
    pub fn new(config: ServiceConfig) -> AppState {
        let registry = Registry::default();
        let n = registry.restore(&config.sessions_dir(), &config.base);
        if n > 0 {
            log::info!("restored {n} session(s)");
        }
        AppState(Arc::new(Inner { config, registry }))
    }

    fn session(&self, id: &str) -> Result<Arc<ApiSession>, ApiError> {
        self.0.registry.get(id)
    }
}

fn ok(status: StatusCode, mut body: Value) -> ApiResult {
    body["schema_version"] = json!(SCHEMA_VERSION);
    Ok((status, Json(body)).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/pending", get(pending))
        .route("/sessions/{id}/decision", post(decision))
        .route("/sessions/{id}/rounds", post(start_round))
        .route("/sessions/{id}/expand", post(expand))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/communities", get(communities))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/log", get(event_log))
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

async fn authorize(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.0.config.app.service.token {
        let expected = format!("Bearer {token}");
        let given = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn create(State(app): State<AppState>, Body(req): Body<CreateSession>) -> ApiResult {
    let cfg = &app.0.config;
    let app_cfg = cfg.merged(req.config.as_ref())?;
    let work = cfg
        .workspace(req.workspace.as_deref())
        .ok_or_else(|| ApiError::field("workspace", "no workspace given and none configured"))?;
    if !work.join(WORK_GRAPH_FILE).exists() {
        return Err(ApiError::field("workspace", format!("{} is not a workspace", work.display())));
    }
    let trained = mediaprof_core::ingest::Workspace::load(&work)
        .map(|w| w.model.is_some())
        .map_err(ApiError::from)?;
    let busy = if trained { None } else { Some(ApiStatus::Training) };
    let session = app.0.registry.reserve(&cfg.sessions_dir(), busy.unwrap_or(ApiStatus::Idle))?;
    let guard = session.begin(busy).await;
    let (base, dir, start) = (cfg.base.clone(), session.dir.clone(), req.start_round);
    let job = move |slot: &mut sessions::Slot| create_state(slot, app_cfg, &base, &work, &dir, start);
    if trained {
        session.run(guard, job).await?;
        ok(StatusCode::CREATED, view_body(&session))
    } else {
        session.spawn(guard, job);
        ok(StatusCode::ACCEPTED, session.view().status_body())
    }
}

fn view_body(s: &ApiSession) -> Value {
    let v = s.view();
    let mut body = v.status_body();
    body["pending_validations"] = json!(v.pending);
    body
}

async fn list(State(app): State<AppState>) -> ApiResult {
    let sessions: Vec<Value> = app.0.registry.list().iter().map(|s| s.view().status_body()).collect();
    ok(StatusCode::OK, json!({ "sessions": sessions }))
}

async fn status(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(StatusCode::OK, app.session(&id)?.view().status_body())
}

async fn pending(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let v = app.session(&id)?.view();
    ok(StatusCode::OK, json!({ "status": v.status, "pending": v.pending }))
}

async fn decision(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<DecisionRequest>,
) -> ApiResult {
    let s = app.session(&id)?;
    let guard = s.begin(None).await;
    let d = HumanDecision {
        validation: req.validation,
        accepted: req.accepted,
        rejected: req.rejected,
    };
    let outcome = s
        .run(guard, move |slot| {
            let (state, _) = slot.parts()?;
            state.apply_decision(&d, Decider::Human)
        })
        .await?;
    let v = s.view();
    ok(StatusCode::OK, json!({ "outcome": outcome, "counters": v.counters, "status": v.status }))
}

async fn start_round(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Body(_): Body<EmptyRequest>,
) -> ApiResult {
    let s = app.session(&id)?;
    let guard = s.begin(None).await;
    let pending = s
        .run(guard, |slot| {
            let (state, backend) = slot.parts()?;
            state.start_round(backend)
        })
        .await?;
    ok(StatusCode::OK, json!({ "status": s.view().status, "pending": pending }))
}

async fn expand(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<ExpandRequest>,
) -> ApiResult {
    if req.rounds == 0 {
        return Err(ApiError::field("rounds", "must be at least 1"));
    }
    let s = app.session(&id)?;
    let guard = s.begin(Some(ApiStatus::Expanding)).await;
    let outcomes = s
        .run(guard, move |slot| {
            let (state, backend) = slot.parts()?;
            (0..req.rounds)
                .map(|_| state.expand_round(req.community, backend))
                .collect::<mediaprof_core::Result<Vec<_>>>()
        })
        .await?;
    let v = s.view();
    ok(StatusCode::OK, json!({ "outcomes": outcomes, "counters": v.counters, "status": v.status }))
}

async fn finalize(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<FinalizeRequest>,
) -> ApiResult {
    let s = app.session(&id)?;
    if s.view().report.is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, "precondition", "session already finalized"));
    }
    let guard = s.begin(Some(ApiStatus::Training)).await;
    s.spawn(guard, move |slot| {
        let (state, _) = slot.parts()?;
        state.finalize(&req.model_tag).map(|_| ())
    });
    ok(StatusCode::ACCEPTED, s.view().status_body())
}

async fn communities(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let v = app.session(&id)?.view();
    ok(StatusCode::OK, json!({ "communities": v.communities }))
}

async fn report(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let v = app.session(&id)?.view();
    match &v.report {
        Some(r) => ok(StatusCode::OK, json!({ "report": r, "counters": v.counters })),
        None => Err(ApiError::new(
            StatusCode::CONFLICT,
            "not_finalized",
            format!("session is {:?}; finalize it first", v.status),
        )),
    }
}

async fn event_log(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let v = app.session(&id)?.view();
    ok(StatusCode::OK, json!({ "events": v.events }))
}
