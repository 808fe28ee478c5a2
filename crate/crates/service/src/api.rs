//! The `/api` HTTP surface.

use std::collections::HashMap;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dar::backends::ImageSource;
use dar::session::GenerationFailure;
use dar::{DarEngine, SessionConfig, SessionState, SessionStatus, TurnRecord};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;
use crate::error::{ApiError, ApiResult};

pub const DEFAULT_RANKING_K: usize = 10;
const MAX_RANKING_K: usize = 1000;

type SharedSession = Arc<Mutex<SessionState>>;

/// Engine, configuration and live sessions shared by all handlers.
pub struct AppState {
    engine: DarEngine,
    config: ServiceConfig,
    assets_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, SharedSession>>,
    next_id: AtomicU64,
}

impl AppState {
    /// Reloads any transcripts found in the snapshot directory.
    pub fn new(engine: DarEngine, config: ServiceConfig) -> dar::Result<Self> {
        let assets_dir = config
            .assets_dir
            .clone()
            .or_else(|| config.index.as_ref().and_then(|p| p.parent().map(FsPath::to_path_buf)));
        let mut sessions = HashMap::new();
        if let Some(dir) = &config.snapshot_dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let state = SessionState::from_transcript(&std::fs::read_to_string(&path)?)?;
                    sessions.insert(state.id.clone(), Arc::new(Mutex::new(state)));
                }
            }
            if !sessions.is_empty() {
                info!("restored {} sessions from {}", sessions.len(), dir.display());
            }
        }
        Ok(Self {
            engine,
            config,
            assets_dir,
            next_id: AtomicU64::new(sessions.len() as u64),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn engine(&self) -> &DarEngine {
        &self.engine
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    fn new_id(&self) -> String {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        let tag = dar::hashing::seeded_hash(nanos, &n.to_le_bytes()) & 0xffff_ffff;
        format!("s{n:05}-{tag:08x}")
    }

    fn session(&self, id: &str) -> ApiResult<SharedSession> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    fn session_config(&self, overrides: Option<Value>) -> ApiResult<SessionConfig> {
        let base = &self.config.dar.session;
        let Some(overrides) = overrides else {
            return Ok(base.clone());
        };
        let mut merged = serde_json::to_value(base).expect("config serializes");
        merge_json(&mut merged, overrides);
        let cfg: SessionConfig = serde_json::from_value(merged)
            .map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn snapshot(&self, state: &SessionState) {
        let Some(dir) = &self.config.snapshot_dir else {
            return;
        };
        let path = dir.join(format!("{}.json", state.id));
        let result = state
            .to_transcript()
            .and_then(|json| Ok(std::fs::write(&path, json)?));
        if let Err(e) = result {
            warn!("snapshot of session {} failed: {e}", state.id);
        }
    }
}

/// Object keys of `over` replace or recurse into those of `base`; any other
/// value replaces `base` wholesale.
pub fn merge_json(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

// ---- payloads --------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub d0: String,
    #[serde(default)]
    pub config_overrides: Option<Value>,
    /// Corpus id or URI of the target; demo mode only.
    #[serde(default)]
    pub target: Option<Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitTurnRequest {
    pub answer: String,
    #[serde(default)]
    pub question: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptRequest {
    pub image_id: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RankingQuery {
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub id: u64,
    pub uri: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSummary {
    pub k: usize,
    pub prompt: String,
    pub image_uri: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnSummary {
    pub turn: usize,
    pub question: Option<String>,
    pub answer: Option<String>,
    pub refined_query: String,
    pub reformulation: dar::reformulate::ReformulationMethod,
    pub prompts: Vec<String>,
    pub weights: Weights,
    pub ranking: Vec<RankedImage>,
    pub generated: Vec<GeneratedSummary>,
    pub failures: Vec<GenerationFailure>,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub turn0: TurnSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub status: SessionStatus,
    pub d0: String,
    pub config: SessionConfig,
    pub turns: Vec<TurnSummary>,
    pub accepted: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResponse {
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub corpus_count: usize,
    pub dim: usize,
    pub demo_mode: bool,
}

impl AppState {
    fn ranked(&self, list: &[dar::RankedItem]) -> Vec<RankedImage> {
        let index = self.engine.index();
        list.iter()
            .map(|r| RankedImage {
                id: r.id,
                uri: index.get(r.id).map(|e| e.uri.to_owned()).unwrap_or_default(),
                score: r.score,
            })
            .collect()
    }

    fn generated(&self, session_id: &str, rec: &TurnRecord) -> Vec<GeneratedSummary> {
        rec.generated
            .iter()
            .map(|g| GeneratedSummary {
                k: g.k,
                prompt: g.prompt.clone(),
                image_uri: match &g.image.source {
                    ImageSource::Uri { uri } => uri.clone(),
                    ImageSource::Inline { .. } => format!(
                        "/api/sessions/{session_id}/turns/{}/generated/{}/image",
                        rec.turn, g.k
                    ),
                },
                seed: g.seed,
            })
            .collect()
    }

    fn turn_summary(&self, state: &SessionState, rec: &TurnRecord) -> TurnSummary {
        let demo = self.config.demo_mode;
        TurnSummary {
            turn: rec.turn,
            question: rec.question.clone(),
            answer: rec.answer.clone(),
            refined_query: rec.refined_query.text.clone(),
            reformulation: rec.refined_query.method,
            prompts: rec.prompts.clone(),
            weights: Weights {
                alpha: rec.weights.alpha(),
                beta: rec.weights.beta(),
            },
            ranking: self.ranked(&rec.ranking),
            generated: self.generated(&state.id, rec),
            failures: rec.failures.clone(),
            status: state.status,
            hit: (demo && state.target.is_some()).then_some(rec.hit),
            target_rank: if demo { rec.target_rank } else { None },
        }
    }

    fn session_summary(&self, state: &SessionState) -> SessionSummary {
        SessionSummary {
            session_id: state.id.clone(),
            status: state.status,
            d0: state.context.initial_description().to_owned(),
            config: state.config.clone(),
            turns: state.records.iter().map(|r| self.turn_summary(state, r)).collect(),
            accepted: state.accepted,
            target: if self.config.demo_mode { state.target } else { None },
        }
    }

    fn resolve_target(&self, target: Option<Value>) -> ApiResult<Option<u64>> {
        let Some(target) = target else {
            return Ok(None);
        };
        if !self.config.demo_mode {
            return Err(ApiError::bad_request("demo_mode_required", "targets are only accepted in demo mode"));
        }
        let index = self.engine.index();
        let id = match &target {
            Value::Number(n) => n.as_u64(),
            Value::String(s) => index.find_by_uri(s).or_else(|| s.parse().ok()),
            _ => None,
        };
        match id {
            Some(id) if index.position(id).is_some() => Ok(Some(id)),
            _ => Err(ApiError::not_found("target", target)),
        }
    }
}

// ---- handlers --------------------------------------------------------------

type St = State<Arc<AppState>>;

async fn health(State(st): St) -> Json<Health> {
    let index = st.engine.index();
    Json(Health {
        status: "ok".into(),
        corpus_count: index.len(),
        dim: index.dim(),
        demo_mode: st.config.demo_mode,
    })
}

async fn create_session(
    State(st): St,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CreateSessionResponse>)> {
    let Json(req) = body?;
    if req.d0.trim().is_empty() {
        return Err(ApiError::bad_request("invalid_input", "d0 must not be empty"));
    }
    let cfg = st.session_config(req.config_overrides)?;
    let target = st.resolve_target(req.target)?;
    let id = st.new_id();
    let st2 = st.clone();
    let state = blocking(move || Ok(st2.engine.create_session(id, &req.d0, cfg, target)?)).await?;
    st.snapshot(&state);
    let response = CreateSessionResponse {
        session_id: state.id.clone(),
        turn0: st.turn_summary(&state, &state.records[0]),
    };
    st.sessions
        .write()
        .expect("session map poisoned")
        .insert(state.id.clone(), Arc::new(Mutex::new(state)));
    Ok((StatusCode::CREATED, Json(response)))
}

async fn get_session(State(st): St, id: Result<Path<String>, PathRejection>) -> ApiResult<Json<SessionSummary>> {
    let Path(id) = id?;
    let session = st.session(&id)?;
    let state = session.lock().await;
    Ok(Json(st.session_summary(&state)))
}

async fn submit_turn(
    State(st): St,
    id: Result<Path<String>, PathRejection>,
    body: Result<Json<SubmitTurnRequest>, JsonRejection>,
) -> ApiResult<Json<TurnSummary>> {
    let Path(id) = id?;
    let Json(req) = body?;
    let session = st.session(&id)?;
    // held for the whole turn: turns of one session never interleave
    let mut state = session.lock_owned().await;
    let st2 = st.clone();
    let summary = blocking(move || {
        let question = match req.question {
            Some(q) => q,
            None => st2.engine.generate_question(&state)?,
        };
        st2.engine.submit_turn(&mut state, &question, &req.answer)?;
        st2.snapshot(&state);
        Ok(st2.turn_summary(&state, state.latest().expect("turn just ran")))
    })
    .await?;
    Ok(Json(summary))
}

async fn question(State(st): St, id: Result<Path<String>, PathRejection>) -> ApiResult<Json<QuestionResponse>> {
    let Path(id) = id?;
    let state = st.session(&id)?.lock_owned().await;
    let st2 = st.clone();
    let question = blocking(move || Ok(st2.engine.generate_question(&state)?)).await?;
    Ok(Json(QuestionResponse { question }))
}

async fn ranking(
    State(st): St,
    id: Result<Path<String>, PathRejection>,
    query: Result<Query<RankingQuery>, QueryRejection>,
) -> ApiResult<Json<Vec<RankedImage>>> {
    let Path(id) = id?;
    let Query(q) = query?;
    let k = q.k.unwrap_or(DEFAULT_RANKING_K);
    if k == 0 || k > MAX_RANKING_K {
        return Err(ApiError::bad_request("invalid_input", format!("k must be in 1..={MAX_RANKING_K}")));
    }
    let state = st.session(&id)?.lock_owned().await;
    let st2 = st.clone();
    let list = blocking(move || Ok(st2.engine.current_ranking(&state, k)?)).await?;
    Ok(Json(st.ranked(&list)))
}

async fn generated(
    State(st): St,
    path: Result<Path<(String, usize)>, PathRejection>,
) -> ApiResult<Json<Vec<GeneratedSummary>>> {
    let Path((id, turn)) = path?;
    let session = st.session(&id)?;
    let state = session.lock().await;
    let rec = state.records.get(turn).ok_or_else(|| ApiError::not_found("turn", turn))?;
    Ok(Json(st.generated(&state.id, rec)))
}

async fn generated_image(
    State(st): St,
    path: Result<Path<(String, usize, usize)>, PathRejection>,
) -> ApiResult<Response> {
    let Path((id, turn, k)) = path?;
    let session = st.session(&id)?;
    let state = session.lock().await;
    let rec = state.records.get(turn).ok_or_else(|| ApiError::not_found("turn", turn))?;
    let image = rec
        .generated
        .iter()
        .find(|g| g.k == k)
        .ok_or_else(|| ApiError::not_found("generated image", k))?;
    Ok(match &image.image.source {
        ImageSource::Inline { bytes, media_type } => {
            ([(header::CONTENT_TYPE, media_type.clone())], bytes.clone()).into_response()
        }
        ImageSource::Uri { uri } => Redirect::temporary(uri).into_response(),
    })
}

async fn accept(
    State(st): St,
    id: Result<Path<String>, PathRejection>,
    body: Result<Json<AcceptRequest>, JsonRejection>,
) -> ApiResult<Json<SessionSummary>> {
    let Path(id) = id?;
    let Json(req) = body?;
    let session = st.session(&id)?;
    let mut state = session.lock().await;
    st.engine.accept(&mut state, req.image_id)?;
    st.snapshot(&state);
    Ok(Json(st.session_summary(&state)))
}

fn media_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

async fn corpus_image(State(st): St, id: Result<Path<u64>, PathRejection>) -> ApiResult<Response> {
    let Path(id) = id?;
    let uri = st
        .engine
        .index()
        .get(id)
        .map(|e| e.uri.to_owned())
        .ok_or_else(|| ApiError::not_found("corpus image", id))?;
    if uri.starts_with("http://") || uri.starts_with("https://") {
        return Ok(Redirect::temporary(&uri).into_response());
    }
    let unavailable = || {
        ApiError::new(StatusCode::NOT_FOUND, "asset_unavailable", format!("no local asset for {uri}"))
    };
    let raw = uri.strip_prefix("file://").unwrap_or(&uri);
    if raw.contains("://") {
        return Err(unavailable());
    }
    let path = match (&st.assets_dir, PathBuf::from(raw)) {
        (_, p) if p.is_absolute() => p,
        (Some(base), p) => base.join(p),
        (None, p) => p,
    };
    let bytes = tokio::fs::read(&path).await.map_err(|_| unavailable())?;
    Ok(([(header::CONTENT_TYPE, media_type(&path))], bytes).into_response())
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/turns", post(submit_turn))
        .route("/api/sessions/{id}/question", get(question))
        .route("/api/sessions/{id}/ranking", get(ranking))
        .route("/api/sessions/{id}/turns/{turn}/generated", get(generated))
        .route("/api/sessions/{id}/turns/{turn}/generated/{k}/image", get(generated_image))
        .route("/api/sessions/{id}/accept", post(accept))
        .route("/api/corpus/images/{id}", get(corpus_image))
        .route("/api", get(api_not_found))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
