//! HTTP API over a [`SessionStore`].
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | | `{id}` |
//! | POST | `/sessions/{id}/image` | multipart `image`, optional `region` (PNG mask), `image_id` | session summary |
//! | POST | `/sessions/{id}/turns` | `{instruction}` | [`TurnResponse`] |
//! | POST | `/sessions/{id}/undo` | | session summary |
//! | GET | `/sessions/{id}/history` | | [`HistoryResponse`] |
//! | GET | `/sessions/{id}/image` | | current PNG |
//!
//! Errors are `{"error": "..."}`. A turn that fails to plan answers 422
//! (502 when the model itself was unreachable) with the same body shape as
//! a successful turn, so the reply can still be shown.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use photochat_core::dispatch::GroupFailure;
use photochat_core::session::{HistoryEntry, SessionError, TurnError};
use photochat_core::{Assistant, BinaryMask, DispatchError, InvocationPlan, Session, SessionStore};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub assistant: Arc<Assistant>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::NoImage | SessionError::NothingToUndo => StatusCode::CONFLICT,
            SessionError::SizeLimit { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            SessionError::Image(_) => StatusCode::BAD_REQUEST,
            SessionError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub stack_len: usize,
    pub image_url: String,
}

#[derive(Debug, Deserialize)]
pub struct TurnRequest {
    pub instruction: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlannedFunction {
    pub name: String,
    pub group: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanView {
    pub functions: Vec<PlannedFunction>,
    pub analysis: String,
    pub model_calls: usize,
    pub attempts: usize,
    pub failures: Vec<GroupFailure>,
}

impl From<&InvocationPlan> for PlanView {
    fn from(plan: &InvocationPlan) -> Self {
        Self {
            functions: plan
                .steps
                .iter()
                .map(|s| PlannedFunction {
                    name: s.function.name.clone(),
                    group: s.origin.clone(),
                })
                .collect(),
            analysis: plan.analysis.clone(),
            model_calls: plan.model_calls,
            attempts: plan.attempts,
            failures: plan.failures.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq, Clone, Copy)]
#[serde(rename_all = "snake_case")]
pub enum TurnOutcome {
    Applied,
    Partial,
    Failed,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnResponse {
    pub reply: String,
    pub status: TurnOutcome,
    pub image_url: String,
    pub plan: Option<PlanView>,
    pub token_usage: usize,
    pub token_total: usize,
    pub stack_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub id: String,
    pub token_total: usize,
    pub stack_len: usize,
    pub turns: Vec<HistoryEntry>,
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let upload_limit = state.store.limits.max_bytes + 1024 * 1024;
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route(
            "/sessions/{id}/image",
            post(upload_image).get(current_image).layer(DefaultBodyLimit::max(upload_limit)),
        )
        .route("/sessions/{id}/turns", post(turn))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/history", get(history))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn image_url(session: &Session) -> String {
    format!("/sessions/{}/image?v={}", session.id(), session.stack_len())
}

fn summary(session: &Session) -> ApiResult<SessionSummary> {
    let image = session.current_image().ok_or(SessionError::NoImage)?;
    Ok(SessionSummary {
        id: session.id().to_string(),
        width: image.width(),
        height: image.height(),
        stack_len: session.stack_len(),
        image_url: image_url(session),
    })
}

/// Runs `f` on the locked session off the async runtime, then snapshots it.
async fn with_session<T, F>(state: &AppState, id: String, persist: bool, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session, &AppState) -> ApiResult<T> + Send + 'static,
{
    let handle: Arc<Mutex<Session>> = state.store.get(&id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut session = handle.lock().map_err(|_| ApiError::internal("session lock poisoned"))?;
        let out = f(&mut session, &state);
        if persist {
            if let Err(e) = state.store.persist(&session) {
                log::warn!("snapshot of session {} failed: {e}", session.id());
            }
        }
        out
    })
    .await
    .map_err(ApiError::internal)?
}

async fn create_session(State(state): State<AppState>) -> ApiResult<(StatusCode, Json<Created>)> {
    let handle = state.store.create();
    let id = handle.lock().map_err(|_| ApiError::internal("session lock poisoned"))?.id().to_string();
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn upload_image(
    State(state): State<AppState>,
    Path(id): Path<String>,
    mut multipart: Multipart,
) -> ApiResult<Json<SessionSummary>> {
    let (mut image, mut region, mut image_id): (Option<Bytes>, Option<Bytes>, Option<String>) = (None, None, None);
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "image" => image = Some(field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?),
            "region" => region = Some(field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?),
            "image_id" => {
                let text = field.text().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
                image_id = Some(text.trim().to_string()).filter(|s| !s.is_empty());
            }
            other => return Err(ApiError::bad_request(format!("unexpected field {other:?}"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing multipart field \"image\""))?;
    let summary = with_session(&state, id, true, move |session, state| {
        let region = region
            .map(|b| BinaryMask::decode_png(&b))
            .transpose()
            .map_err(|e| ApiError::bad_request(format!("region: {e}")))?;
        session.upload(&image, &state.store.limits)?;
        session.set_region(region)?;
        session.set_image_id(image_id);
        summary(session)
    })
    .await?;
    Ok(Json(summary))
}

async fn turn(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<TurnRequest>,
) -> ApiResult<(StatusCode, Json<TurnResponse>)> {
    let instruction = req.instruction.trim().to_string();
    if instruction.is_empty() {
        return Err(ApiError::bad_request("instruction is empty"));
    }
    with_session(&state, id, true, move |session, state| {
        let result = state.assistant.turn(session, &instruction);
        let respond = |status, reply: String, plan: Option<&InvocationPlan>, token_usage, error: Option<String>| TurnResponse {
            reply,
            status,
            image_url: image_url(session),
            plan: plan.map(PlanView::from),
            token_usage,
            token_total: session.token_total(),
            stack_len: session.stack_len(),
            error,
        };
        Ok(match result {
            Ok(outcome) => {
                let status = if outcome.plan.is_partial() {
                    TurnOutcome::Partial
                } else {
                    TurnOutcome::Applied
                };
                let body = respond(status, outcome.reply, Some(&outcome.plan), outcome.plan.token_usage, None);
                (StatusCode::OK, body)
            }
            Err(TurnError::Session(e)) => return Err(e.into()),
            Err(TurnError::Invocation { reply, error }) => {
                let code = match error {
                    DispatchError::Backend { .. } => StatusCode::BAD_GATEWAY,
                    DispatchError::InvocationFailure { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                };
                let body = respond(TurnOutcome::Failed, reply, None, error.tokens_spent(), Some(error.to_string()));
                (code, body)
            }
            Err(TurnError::Execution { reply, error }) => {
                let body = respond(
                    TurnOutcome::Partial,
                    reply,
                    Some(&error.plan),
                    error.plan.token_usage + error.cause.tokens_spent(),
                    Some(error.cause.to_string()),
                );
                (StatusCode::OK, body)
            }
        })
    })
    .await
    .map(|(code, body)| (code, Json(body)))
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let summary = with_session(&state, id, true, |session, _| {
        session.undo()?;
        summary(session)
    })
    .await?;
    Ok(Json(summary))
}

async fn history(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<HistoryResponse>> {
    let body = with_session(&state, id, false, |session, _| {
        Ok(HistoryResponse {
            id: session.id().to_string(),
            token_total: session.token_total(),
            stack_len: session.stack_len(),
            turns: session.history().to_vec(),
        })
    })
    .await?;
    Ok(Json(body))
}

async fn current_image(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let png = with_session(&state, id, false, |session, _| {
        let image = session.current_image().ok_or(SessionError::NoImage)?;
        image.encode_png().map_err(ApiError::internal)
    })
    .await?;
    Ok((
        [(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")],
        png,
    )
        .into_response())
}
