//! HTTP routes. Handlers parse the body, take the service lock, call one
//! [`Service`] method and render the result. Errors are JSON objects of the
//! form `{"error": {"code": ..., "message": ...}}`.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use easel_core::curation::CurationSession;
use easel_core::session::GuidedSession;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::service::{ServiceError, Versioned};
use crate::Service;

pub type Shared = Arc<Mutex<Service>>;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = json!({"error": {"code": self.0.code(), "message": self.0.to_string()}});
        (
            status,
            [(header::CONTENT_TYPE, "application/json")],
            body.to_string(),
        )
            .into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn lock(state: &Shared) -> MutexGuard<'_, Service> {
    // a panic mid-request cannot leave half-applied state: mutations only
    // replace in-memory values after the store write succeeded
    state
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError(ServiceError::BadRequest(e.to_string())))
}

fn json_text(status: StatusCode, text: String, version: Option<u64>) -> Response {
    let mut resp = (status, [(header::CONTENT_TYPE, "application/json")], text).into_response();
    if let Some(v) = version {
        resp.headers_mut().insert(
            header::ETAG,
            HeaderValue::from_str(&format!("\"{v}\"")).expect("ascii"),
        );
    }
    resp
}

fn json_value<T: Serialize>(value: &T) -> Response {
    json_text(
        StatusCode::OK,
        serde_json::to_string_pretty(value).expect("response serializes"),
        None,
    )
}

fn curation_resp(status: StatusCode, c: &CurationSession) -> Response {
    json_text(status, c.export_json(), Some(c.version()))
}

fn session_resp(status: StatusCode, s: &Versioned<GuidedSession>) -> Response {
    json_text(status, s.value.export_json(), Some(s.version))
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/paintings", get(paintings))
        .route("/paintings/{id}", get(painting))
        .route("/spaces", get(spaces))
        .route("/recommend", post(recommend))
        .route("/curation", post(create_curation))
        .route("/curation/{id}", get(get_curation))
        .route("/curation/{id}/attach", post(attach))
        .route("/curation/{id}/action", post(action))
        .route("/curation/{id}/finalize", post(finalize))
        .route("/curation/{id}/timing", get(timing).post(supply_timing))
        .route("/sessions", post(build_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/pre", post(pre))
        .route("/sessions/{id}/post", post(post_capture))
        .route("/sessions/{id}/reflection", post(reflection))
        .route("/sessions/{id}/ratings", post(ratings))
        .route("/analytics/mood", get(mood))
        .route("/analytics/panas", get(panas))
        .route("/analytics/ratings", get(rating_summary))
        .route("/export/sessions.csv", get(export_csv))
        .route("/themes", get(themes).post(record_theme))
        .route("/themes/codebook", get(codebook))
        .with_state(service)
}

async fn healthz(State(s): State<Shared>) -> Response {
    let s = lock(&s);
    json_value(&json!({
        "status": "ok",
        "paintings": s.catalog().len(),
        "spaces": s.spaces().into_iter().map(|x| x.space_id).collect::<Vec<_>>(),
    }))
}

async fn paintings(State(s): State<Shared>) -> Response {
    json_value(&lock(&s).paintings())
}

async fn painting(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    Ok(json_value(lock(&s).painting(&id)?))
}

async fn spaces(State(s): State<Shared>) -> Response {
    json_value(&lock(&s).spaces())
}

async fn recommend(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(json_value(&lock(&s).recommend(&req)?))
}

async fn create_curation(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(curation_resp(
        StatusCode::CREATED,
        lock(&s).create_curation(req)?,
    ))
}

async fn get_curation(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    Ok(curation_resp(StatusCode::OK, lock(&s).curation(&id)?))
}

async fn attach(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(curation_resp(StatusCode::OK, lock(&s).attach(&id, req)?))
}

async fn action(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(curation_resp(StatusCode::OK, lock(&s).action(&id, req)?))
}

async fn finalize(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(curation_resp(StatusCode::OK, lock(&s).finalize(&id, req)?))
}

async fn timing(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    Ok(json_value(&lock(&s).timing(&id)?))
}

async fn supply_timing(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(curation_resp(
        StatusCode::OK,
        lock(&s).supply_timing(&id, req)?,
    ))
}

async fn build_session(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(session_resp(
        StatusCode::CREATED,
        lock(&s).build_session(req)?,
    ))
}

async fn get_session(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    Ok(session_resp(StatusCode::OK, lock(&s).session(&id)?))
}

async fn pre(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(session_resp(StatusCode::OK, lock(&s).record_pre(&id, req)?))
}

async fn post_capture(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(session_resp(
        StatusCode::OK,
        lock(&s).record_post(&id, req)?,
    ))
}

async fn reflection(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(session_resp(
        StatusCode::OK,
        lock(&s).record_reflection(&id, req)?,
    ))
}

async fn ratings(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    Ok(session_resp(
        StatusCode::OK,
        lock(&s).record_ratings(&id, req)?,
    ))
}

async fn mood(State(s): State<Shared>) -> ApiResult {
    Ok(json_value(&lock(&s).mood()?))
}

async fn panas(State(s): State<Shared>) -> ApiResult {
    Ok(json_value(&lock(&s).panas()?))
}

async fn rating_summary(State(s): State<Shared>) -> ApiResult {
    Ok(json_value(&lock(&s).ratings()?))
}

async fn export_csv(State(s): State<Shared>) -> ApiResult {
    let csv = lock(&s).export_csv()?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn themes(State(s): State<Shared>) -> Response {
    json_value(&lock(&s).themes().all())
}

async fn codebook(State(s): State<Shared>) -> Response {
    json_value(lock(&s).themes().codebook())
}

async fn record_theme(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req = parse(&body)?;
    let code = lock(&s).record_theme(req)?;
    Ok(json_text(
        StatusCode::CREATED,
        serde_json::to_string_pretty(&code).expect("serializes"),
        None,
    ))
}
