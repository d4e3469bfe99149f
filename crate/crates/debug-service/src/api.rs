use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::session::{Registry, ServiceError, Session};

type Shared = Arc<Registry>;

pub fn router(registry: Shared) -> Router {
    Router::new()
        .route("/grammars", get(grammars))
        .route("/sessions", post(create))
        .route("/sessions/{id}", delete(remove))
        .route("/sessions/{id}/selections", get(selections))
        .route("/sessions/{id}/choose", post(choose))
        .route("/sessions/{id}/candidates", get(candidates))
        .route("/sessions/{id}/merge", post(merge))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/state", get(state))
        .with_state(registry)
}

enum ApiError {
    Service(ServiceError),
    BadRequest(String),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::Service(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BAD_REQUEST", m),
            ApiError::Service(e) => {
                let status = match &e {
                    ServiceError::UnknownGrammar(_) | ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
                    ServiceError::WrongState(_) => StatusCode::CONFLICT,
                    ServiceError::Clash(_) => StatusCode::UNPROCESSABLE_ENTITY,
                    ServiceError::MergeFailed(_) => StatusCode::INTERNAL_SERVER_ERROR,
                    ServiceError::Core(igram_core::Error::Io(_) | igram_core::Error::Internal(_)) => {
                        StatusCode::INTERNAL_SERVER_ERROR
                    }
                    _ => StatusCode::BAD_REQUEST,
                };
                (status, e.code(), e.to_string())
            }
        };
        (status, Json(json!({"error": {"code": code, "message": message}}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lock(s: &Mutex<Session>) -> MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(|e| e.into_inner())
}

async fn grammars(State(reg): State<Shared>) -> Json<Vec<String>> {
    Json(reg.grammar_ids())
}

#[derive(Deserialize)]
struct CreateBody {
    sentence: String,
    grammar: String,
}

async fn create(State(reg): State<Shared>, body: Result<Json<CreateBody>, JsonRejection>) -> ApiResult<Response> {
    let Json(body) = body?;
    let session = reg.create(&body.sentence, &body.grammar)?;
    let view = lock(&session).state();
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn remove(State(reg): State<Shared>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    reg.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct PageQuery {
    cap: Option<usize>,
    after: Option<String>,
}

const DEFAULT_CAP: usize = 50;

async fn selections(
    State(reg): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Response> {
    let after = match q.after.as_deref() {
        None => 0,
        Some(t) => t
            .parse()
            .map_err(|_| ApiError::BadRequest(format!("bad continuation token `{t}`")))?,
    };
    let cap = q.cap.unwrap_or(DEFAULT_CAP).max(1);
    let session = reg.get(&id)?;
    let page = lock(&session).list_selections(cap, after)?;
    Ok(Json(page).into_response())
}

#[derive(Deserialize)]
struct ChooseBody {
    index: usize,
}

async fn choose(
    State(reg): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<ChooseBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    let session = reg.get(&id)?;
    let mut s = lock(&session);
    s.choose(body.index)?;
    Ok(Json(s.state()).into_response())
}

async fn candidates(State(reg): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = reg.get(&id)?;
    let list = lock(&session).candidates()?;
    Ok(Json(list).into_response())
}

#[derive(Deserialize, Serialize)]
struct MergeBody {
    a: u32,
    b: u32,
}

async fn merge(
    State(reg): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<MergeBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    let session = reg.get(&id)?;
    let mut s = lock(&session);
    s.merge(body.a, body.b)?;
    Ok(Json(s.state()).into_response())
}

async fn undo(State(reg): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = reg.get(&id)?;
    let mut s = lock(&session);
    s.undo()?;
    Ok(Json(s.state()).into_response())
}

async fn state(State(reg): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = reg.get(&id)?;
    let view = lock(&session).state();
    Ok(Json(view).into_response())
}
