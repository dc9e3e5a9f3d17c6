//! HTTP+JSON routes. Every payload carries `"v": 1`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::render::{render, OptionView, RenderConfig};
use crate::session::{ParticipantMeta, Phase, SessionError, SurveyCondition};
use crate::store::{SessionStore, StoreError};

pub const API_VERSION: u32 = 1;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub render: Arc<RenderConfig>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/answer", post(submit_answer))
        .route("/sessions/{id}/results", get(session_results))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "v": API_VERSION, "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        match e {
            StoreError::NotFound => Self::new(S::NOT_FOUND, "not_found", msg),
            StoreError::Io(_) => Self::new(S::INTERNAL_SERVER_ERROR, "storage", msg),
            StoreError::Session(s) => match s {
                SessionError::ConsentRequired => Self::new(S::UNPROCESSABLE_ENTITY, "consent_required", msg),
                SessionError::SessionDone => Self::new(S::CONFLICT, "session_done", msg),
                SessionError::NotDone => Self::new(S::CONFLICT, "not_done", msg),
                SessionError::NoPendingQuery => Self::new(S::CONFLICT, "no_pending_query", msg),
                SessionError::StaleStep { .. } => Self::new(S::CONFLICT, "stale_step", msg),
                SessionError::ChoiceOutOfRange { .. } => Self::new(S::UNPROCESSABLE_ENTITY, "choice_out_of_range", msg),
                SessionError::DominatedChoice(_) => Self::new(S::UNPROCESSABLE_ENTITY, "dominated_choice", msg),
                SessionError::Corrupt(_) | SessionError::Learning(_) => Self::new(S::INTERNAL_SERVER_ERROR, "internal", msg),
            },
        }
    }
}

/// Parses a JSON body and checks its schema version.
fn parse_body<T: DeserializeOwned + Versioned>(body: &Bytes) -> Result<T, ApiError> {
    let value: T = serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    match value.version() {
        None | Some(API_VERSION) => Ok(value),
        Some(v) => Err(ApiError::new(StatusCode::BAD_REQUEST, "unsupported_version", format!("unsupported schema version {v}"))),
    }
}

trait Versioned {
    fn version(&self) -> Option<u32>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub v: Option<u32>,
    pub meta: ParticipantMeta,
    pub condition: SurveyCondition,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Versioned for CreateSessionRequest {
    fn version(&self) -> Option<u32> {
        self.v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerRequest {
    #[serde(default)]
    pub v: Option<u32>,
    pub choice: usize,
    /// Step of the query being answered; guards against double submission.
    #[serde(default)]
    pub step: Option<usize>,
}

impl Versioned for AnswerRequest {
    fn version(&self) -> Option<u32> {
        self.v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub v: u32,
    pub id: String,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub v: u32,
    pub id: String,
    /// Zero-based position of this query in the whole protocol.
    pub step: usize,
    pub total_steps: usize,
    pub phase: Phase,
    pub options: Vec<OptionView>,
    pub query: fareopt_core::OptionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub v: u32,
    pub id: String,
    pub recorded_step: usize,
    pub phase: Phase,
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "v": API_VERSION, "status": "ok", "sessions": state.store.len() }))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let req: CreateSessionRequest = parse_body(&body)?;
    let (id, phase) = state.store.create(req.meta, req.condition, req.seed).await?;
    Ok((StatusCode::CREATED, Json(SessionCreated { v: API_VERSION, id, phase })))
}

async fn get_query(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<QueryResponse>, ApiError> {
    let p = state.store.query(&id).await?;
    let options = render(&p.query, &state.render, &state.store.protocol().generator);
    Ok(Json(QueryResponse { v: API_VERSION, id, step: p.step, total_steps: p.total_steps, phase: p.phase, options, query: p.query }))
}

async fn submit_answer(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<AnswerResponse>, ApiError> {
    let req: AnswerRequest = parse_body(&body)?;
    let (recorded_step, phase) = state.store.answer(&id, req.choice, req.step).await?;
    Ok(Json(AnswerResponse { v: API_VERSION, id, recorded_step, phase }))
}

async fn session_results(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<crate::session::SessionResults>, ApiError> {
    Ok(Json(state.store.results(&id).await?))
}
