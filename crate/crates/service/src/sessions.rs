//! Session registry. Writes to one session run one at a time behind an
//! async mutex; reads see the last committed view without taking it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::Serialize;
use serde_json::Value;
use tokio::sync::{Mutex, OwnedMutexGuard};

use mediaprof_core::community::Community;
use mediaprof_core::eval::MetricsReport;
use mediaprof_core::ingest::{AppConfig, Workspace};
use mediaprof_core::llm::{build_backend, LlmBackend};
use mediaprof_core::session::{
    load_session, save_session, write_exports, Counters, Event, PendingValidation, SessionState,
    SessionStatus, EVENTS_FILE,
};
use mediaprof_core::{Error, Result};

use crate::api::{decode, ApiError, ApiStatus, ErrorBody, SCHEMA_VERSION};

pub const SESSION_CONFIG_FILE: &str = "config.toml";

/// Where the service finds workspaces and keeps sessions.
#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub app: AppConfig,
    /// Relative paths resolve against this directory.
    pub base: PathBuf,
}

impl ServiceConfig {
    pub fn sessions_dir(&self) -> PathBuf {
        self.base.join(&self.app.service.sessions_dir)
    }

    pub fn workspace(&self, requested: Option<&str>) -> Option<PathBuf> {
        requested
            .or(self.app.service.workspace.as_deref())
            .map(|p| self.base.join(p))
    }

    /// The service configuration with `overrides` merged in, key by key.
    pub fn merged(&self, overrides: Option<&Value>) -> std::result::Result<AppConfig, ApiError> {
        let Some(o) = overrides else {
            return Ok(self.app.clone());
        };
        let mut base = serde_json::to_value(&self.app).map_err(Error::Json)?;
        merge(&mut base, o);
        let cfg: AppConfig = decode(base, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// The last committed state of a session, as served to readers.
#[derive(Clone, Debug, Serialize)]
pub struct View {
    pub id: String,
    pub status: ApiStatus,
    pub counters: Counters,
    pub pending: Vec<PendingValidation>,
    pub communities: Vec<Community>,
    pub report: Option<Vec<MetricsReport>>,
    pub events: Vec<Event>,
    pub state_hash: Option<String>,
    /// Failure of the last background job.
    pub error: Option<ErrorBody>,
}

impl View {
    fn empty(id: &str, status: ApiStatus) -> View {
        View {
            id: id.to_string(),
            status,
            counters: Counters::default(),
            pending: Vec::new(),
            communities: Vec::new(),
            report: None,
            events: Vec::new(),
            state_hash: None,
            error: None,
        }
    }

    fn of(id: &str, s: &SessionState) -> View {
        View {
            id: id.to_string(),
            status: match s.status() {
                SessionStatus::AwaitingDecision => ApiStatus::AwaitingDecision,
                SessionStatus::Idle => ApiStatus::Idle,
                SessionStatus::Converged => ApiStatus::Converged,
                SessionStatus::Finalized => ApiStatus::Finalized,
            },
            counters: s.counters().clone(),
            pending: s.pending().cloned().collect(),
            communities: s.communities().cloned().collect(),
            report: s.finalized().map(|f| f.reports.clone()),
            events: s.events().to_vec(),
            state_hash: Some(s.state_hash()),
            error: None,
        }
    }

    pub fn status_body(&self) -> Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "status": self.status,
            "counters": self.counters,
            "pending": self.pending.len(),
            "communities": self.communities.len(),
            "finalized": self.report.is_some(),
            "state_hash": self.state_hash,
            "error": self.error,
        })
    }
}

pub struct Slot {
    pub state: Option<SessionState>,
    pub backend: Option<Box<dyn LlmBackend>>,
}

impl Slot {
    /// The state and backend, once the session is ready.
    pub fn parts(&mut self) -> Result<(&mut SessionState, &dyn LlmBackend)> {
        match (&mut self.state, &self.backend) {
            (Some(s), Some(b)) => Ok((s, b.as_ref())),
            _ => Err(Error::Precondition("session is not ready".into())),
        }
    }
}

pub struct ApiSession {
    pub id: String,
    pub dir: PathBuf,
    slot: Arc<Mutex<Slot>>,
    view: RwLock<Arc<View>>,
}

impl ApiSession {
    fn new(id: String, dir: PathBuf, slot: Slot, view: View) -> Arc<ApiSession> {
        Arc::new(ApiSession {
            id,
            dir,
            slot: Arc::new(Mutex::new(slot)),
            view: RwLock::new(Arc::new(view)),
        })
    }

    pub fn view(&self) -> Arc<View> {
        self.view.read().expect("view lock").clone()
    }

    fn publish(&self, v: View) {
        *self.view.write().expect("view lock") = Arc::new(v);
    }

    /// Waits for earlier writes, then shows `busy` to readers.
    pub async fn begin(self: &Arc<Self>, busy: Option<ApiStatus>) -> OwnedMutexGuard<Slot> {
        let guard = self.slot.clone().lock_owned().await;
        if let Some(status) = busy {
            let mut v = (*self.view()).clone();
            v.status = status;
            self.publish(v);
        }
        guard
    }

    /// Runs `f` on a blocking thread while holding the write lock, persists
    /// the exports and publishes the new view before releasing the lock.
    pub async fn run<R, F>(self: &Arc<Self>, guard: OwnedMutexGuard<Slot>, f: F) -> Result<R>
    where
        R: Send + 'static,
        F: FnOnce(&mut Slot) -> Result<R> + Send + 'static,
    {
        self.execute(guard, f, false).await
    }

    async fn execute<R, F>(self: &Arc<Self>, mut guard: OwnedMutexGuard<Slot>, f: F, record: bool) -> Result<R>
    where
        R: Send + 'static,
        F: FnOnce(&mut Slot) -> Result<R> + Send + 'static,
    {
        let me = self.clone();
        tokio::task::spawn_blocking(move || {
            let out = f(&mut guard);
            let mut view = match &guard.state {
                Some(s) => {
                    if let Err(e) = write_exports(s, &me.dir) {
                        log::error!("session {}: {e}", me.id);
                    }
                    View::of(&me.id, s)
                }
                None => View::empty(&me.id, ApiStatus::Failed),
            };
            if let (true, Err(e)) = (record, &out) {
                view.error = Some(ApiError::from(e).body);
            }
            me.publish(view);
            drop(guard);
            out
        })
        .await
        .map_err(|e| Error::Precondition(format!("worker failed: {e}")))?
    }

    /// Like `run`, detached; the outcome is visible through the view.
    pub fn spawn<F>(self: &Arc<Self>, guard: OwnedMutexGuard<Slot>, f: F)
    where
        F: FnOnce(&mut Slot) -> Result<()> + Send + 'static,
    {
        let me = self.clone();
        tokio::spawn(async move {
            if let Err(e) = me.execute(guard, f, true).await {
                log::warn!("session {}: {e}", me.id);
            }
        });
    }
}

/// Builds a new session from a workspace: trains when the workspace has no
/// model, saves the session and optionally starts the first round.
pub fn create_state(
    slot: &mut Slot,
    mut cfg: AppConfig,
    base: &Path,
    work: &Path,
    dir: &Path,
    start_round: bool,
) -> Result<()> {
    let mut ws = Workspace::load(work)?;
    ws.resolve_llm(&mut cfg.llm, base)?;
    let backend = build_backend(&cfg.llm, base)?;
    if ws.model.is_none() {
        log::info!("training a model for {}", dir.display());
        ws.train(&cfg.model)?;
    }
    let model = ws.model()?.clone();
    let mut state = SessionState::new(ws.graph, model, ws.texts, cfg.session_config())?;
    save_session(&mut state, dir)?;
    let path = dir.join(SESSION_CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    if start_round {
        state.start_round(backend.as_ref())?;
    }
    slot.state = Some(state);
    slot.backend = Some(backend);
    Ok(())
}

#[derive(Default)]
pub struct Registry {
    sessions: RwLock<BTreeMap<String, Arc<ApiSession>>>,
}

impl Registry {
    pub fn get(&self, id: &str) -> std::result::Result<Arc<ApiSession>, ApiError> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
    }

    pub fn list(&self) -> Vec<Arc<ApiSession>> {
        self.sessions.read().expect("registry lock").values().cloned().collect()
    }

    /// Reserves a fresh id and directory under `root`.
    pub fn reserve(&self, root: &Path, status: ApiStatus) -> Result<Arc<ApiSession>> {
        let mut map = self.sessions.write().expect("registry lock");
        let mut n = map.len() + 1;
        loop {
            let id = format!("s{n:04}");
            let dir = root.join(&id);
            if !map.contains_key(&id) && !dir.exists() {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let slot = Slot {
                    state: None,
                    backend: None,
                };
                let s = ApiSession::new(id.clone(), dir, slot, View::empty(&id, status));
                map.insert(id, s.clone());
                return Ok(s);
            }
            n += 1;
        }
    }

    /// Reopens every saved session under `root`. Unreadable ones are
    /// skipped with a warning.
    pub fn restore(&self, root: &Path, base: &Path) -> usize {
        let Ok(entries) = std::fs::read_dir(root) else {
            return 0;
        };
        let mut dirs: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
        dirs.sort();
        let mut restored = 0;
        for dir in dirs.into_iter().filter(|d| d.join(EVENTS_FILE).exists()) {
            let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let opened = load_session(&dir).and_then(|state| {
                let cfg = AppConfig::load(&dir.join(SESSION_CONFIG_FILE))?;
                Ok((state, build_backend(&cfg.llm, base)?))
            });
            match opened {
                Ok((state, backend)) => {
                    let view = View::of(&id, &state);
                    let slot = Slot {
                        state: Some(state),
                        backend: Some(backend),
                    };
                    let s = ApiSession::new(id.clone(), dir, slot, view);
                    self.sessions.write().expect("registry lock").insert(id, s);
                    restored += 1;
                }
                Err(e) => log::warn!("skipping {}: {e}", dir.display()),
            }
        }
        restored
    }
}
