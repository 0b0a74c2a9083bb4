//! HTTP service hosting live sessions.
//!
//! Sessions are independent; mutations of one session are serialized by a
//! per-session lock and run on the blocking pool, since replanning and
//! refitting are CPU-bound. Every accepted mutation is appended to the
//! session's event file before the in-memory state changes.

pub mod session;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::model::Action;
use session::{EventKind, Session, SessionConfig, SessionEvent};
use store::EventStore;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Invalid(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Invalid(_) => "invalid_input",
            ServiceError::Internal(_) => "internal",
        }
    }
}

impl From<crate::Error> for ServiceError {
    fn from(e: crate::Error) -> Self {
        use crate::Error as E;
        match e {
            E::Io(_) | E::Json(_) | E::Csv(_) => ServiceError::Internal(e.to_string()),
            _ => ServiceError::Invalid(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if let ServiceError::Internal(m) = &self {
            log::error!("{m}");
        }
        let body = ErrorBody { code: self.code().into(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Where event files live; `None` keeps sessions in memory only.
    pub data_dir: Option<PathBuf>,
    /// Settings a create request starts from; request fields override them.
    pub defaults: SessionConfig,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
}

struct Entry {
    session: Session,
    events: Vec<SessionEvent>,
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Entry>>>>>,
    store: EventStore,
    defaults: Arc<serde_json::Value>,
}

impl AppState {
    /// Opens the store and replays every persisted session.
    pub fn new(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let store = match &cfg.data_dir {
            Some(d) => EventStore::open(d)?,
            None => EventStore::in_memory(),
        };
        let mut map = HashMap::new();
        for (session, events) in store.load_all()? {
            map.insert(session.session_id.clone(), Arc::new(Mutex::new(Entry { session, events })));
        }
        let defaults = serde_json::to_value(&cfg.defaults).map_err(|e| ServiceError::Internal(e.to_string()))?;
        Ok(AppState {
            sessions: Arc::new(RwLock::new(map)),
            store,
            defaults: Arc::new(defaults),
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ServiceError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))
    }

    /// Snapshot of a session's state and events.
    pub fn snapshot(&self, id: &str) -> Result<(Session, Vec<SessionEvent>), ServiceError> {
        let e = self.entry(id)?;
        let g = e.lock().expect("session lock");
        Ok((g.session.clone(), g.events.clone()))
    }

    pub fn create(&self, body: serde_json::Value) -> Result<Session, ServiceError> {
        let mut merged = (*self.defaults).clone();
        match body {
            serde_json::Value::Object(fields) => {
                let obj = merged.as_object_mut().expect("defaults serialize to an object");
                for (k, v) in fields {
                    obj.insert(k, v);
                }
            }
            serde_json::Value::Null => {}
            _ => return Err(ServiceError::Invalid("session config must be a JSON object".into())),
        }
        let config: SessionConfig =
            serde_json::from_value(merged).map_err(|e| ServiceError::Invalid(format!("session config: {e}")))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let kind = Session::created_event(&id, &config, rand::random())?;
        let ev = SessionEvent { seq: 0, timestamp: now(), kind };
        let session = Session::replay(std::slice::from_ref(&ev))?;
        self.store.append(&id, std::slice::from_ref(&ev))?;
        let entry = Entry { session: session.clone(), events: vec![ev] };
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id, Arc::new(Mutex::new(entry)));
        Ok(session)
    }

    /// Runs `decide` under the session's lock, persists the resulting
    /// events, applies them, and returns `view` of the new state along with
    /// the accepted events.
    pub fn mutate<T>(
        &self,
        id: &str,
        decide: impl FnOnce(&Session) -> Result<Vec<EventKind>, ServiceError>,
        view: impl FnOnce(&Session, &[SessionEvent]) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let e = self.entry(id)?;
        let mut g = e.lock().expect("session lock");
        let kinds = decide(&g.session)?;
        let mut next = g.session.clone();
        let ts = now();
        let mut accepted = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let ev = SessionEvent { seq: next.next_seq, timestamp: ts.clone(), kind };
            next.apply(&ev)?;
            accepted.push(ev);
        }
        self.store.append(id, &accepted)?;
        g.session = next;
        g.events.extend(accepted.iter().cloned());
        view(&g.session, &accepted)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ServiceError> {
    let text = if bytes.iter().all(u8::is_ascii_whitespace) { &b"{}"[..] } else { &bytes[..] };
    serde_json::from_slice(text).map_err(|e| ServiceError::Invalid(format!("request body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub status: session::Status,
    pub n_sites: usize,
    pub scenario_seed: u64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceRequest {
    pub action: Action,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustRequest {
    pub slider: i64,
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ServiceError> {
    let value: serde_json::Value = parse_body(&body)?;
    let s = blocking(move || st.create(value)).await?;
    log::info!("created session {} with {} sites", s.session_id, s.n_sites());
    let out = Created {
        session_id: s.session_id.clone(),
        status: s.status,
        n_sites: s.n_sites(),
        scenario_seed: s.scenario.seed,
    };
    Ok((StatusCode::CREATED, Json(out)))
}

async fn get_site(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let view = blocking(move || {
        st.mutate(&id, |s| s.decide_site(), |s, _| {
            s.site_view().ok_or_else(|| ServiceError::Internal("no recommendation after issuing one".into()))
        })
    })
    .await?;
    Ok(Json(view))
}

async fn submit_choice(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let req: ChoiceRequest = parse_body(&body)?;
    let outcome = blocking(move || {
        st.mutate(&id, |s| s.decide_choice(req.action), |s, _| {
            s.last_outcome().ok_or_else(|| ServiceError::Internal("no outcome after a choice".into()))
        })
    })
    .await?;
    Ok(Json(outcome))
}

async fn submit_trust(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let req: TrustRequest = parse_body(&body)?;
    let ack = blocking(move || {
        st.mutate(&id, |s| s.decide_trust(req.slider), |s, evs| {
            let stage = match evs.first().map(|e| &e.kind) {
                Some(EventKind::TrustReported { stage, .. }) => *stage,
                _ => return Err(ServiceError::Internal("trust report not recorded".into())),
            };
            let refitted = evs.iter().any(|e| matches!(e.kind, EventKind::ParamsRefitted { .. }));
            Ok(s.trust_ack(stage, refitted))
        })
    })
    .await?;
    Ok(Json(ack))
}

async fn get_summary(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let (s, _) = st.snapshot(&id)?;
    Ok(Json(s.summary()?))
}

async fn get_events(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let (_, events) = st.snapshot(&id)?;
    Ok(Json(events))
}

async fn not_found() -> ServiceError {
    ServiceError::NotFound("no such route".into())
}

fn cors(origins: &[String]) -> Result<CorsLayer, ServiceError> {
    let allow = if origins.is_empty() {
        AllowOrigin::any()
    } else {
        let list = origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Invalid(format!("bad CORS origin {o:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        AllowOrigin::list(list)
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]))
}

pub fn router(state: AppState, cfg: &ServiceConfig) -> Result<Router, ServiceError> {
    Ok(Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/site", get(get_site))
        .route("/sessions/{id}/choice", post(submit_choice))
        .route("/sessions/{id}/trust", post(submit_trust))
        .route("/sessions/{id}/summary", get(get_summary))
        .route("/sessions/{id}/events", get(get_events))
        .fallback(not_found)
        .layer(cors(&cfg.cors_origins)?)
        .with_state(state))
}

/// Binds `addr` and serves until `shutdown` resolves.
pub async fn serve(
    addr: SocketAddr,
    cfg: ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> crate::Result<()> {
    let state = AppState::new(&cfg).map_err(|e| crate::Error::Precondition(e.to_string()))?;
    let restored = state.session_count();
    let app = router(state, &cfg).map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {} ({restored} sessions restored)", listener.local_addr()?);
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}
