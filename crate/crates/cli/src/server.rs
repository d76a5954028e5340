//! HTTP API over a shared read-only recognizer.

use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use ssdcnn::recognizer::RecognizeError;
use ssdcnn::Recognizer;
use tower_http::services::ServeDir;

use crate::InkRequest;

#[derive(Debug, Serialize)]
pub struct ApiError {
    pub error: String,
    /// Location of the offending field, e.g. `strokes[0][1]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

type Rejection = (StatusCode, Json<ApiError>);

fn rejection(status: StatusCode, error: impl Into<String>, path: Option<String>) -> Rejection {
    (
        status,
        Json(ApiError {
            error: error.into(),
            path,
        }),
    )
}

fn reject(status: StatusCode, error: impl Into<String>, path: Option<String>) -> Response {
    rejection(status, error, path).into_response()
}

pub fn router(recognizer: Recognizer, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/health", get(|| async { "ok" }))
        .route("/api/model", get(model_info))
        .route("/api/recognize", post(recognize))
        .route("/api/featuremaps", get(feature_maps).post(feature_maps))
        .with_state(Arc::new(recognizer));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn model_info(State(rec): State<Arc<Recognizer>>) -> impl IntoResponse {
    Json(rec.info())
}

fn parse(body: &[u8]) -> Result<InkRequest, Rejection> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    let req: InkRequest = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        rejection(
            StatusCode::BAD_REQUEST,
            e.into_inner().to_string(),
            (path != ".").then_some(path),
        )
    })?;
    if req.k == 0 {
        return Err(rejection(StatusCode::BAD_REQUEST, "k must be at least 1", Some("k".into())));
    }
    if req.strokes.iter().all(Vec::is_empty) {
        return Err(rejection(StatusCode::UNPROCESSABLE_ENTITY, "ink has no points", Some("strokes".into())));
    }
    if let Some(i) = req.strokes.iter().position(Vec::is_empty) {
        return Err(rejection(
            StatusCode::BAD_REQUEST,
            format!("stroke {i} has no points"),
            Some(format!("strokes[{i}]")),
        ));
    }
    Ok(req)
}

fn failure(e: RecognizeError) -> Response {
    match e {
        RecognizeError::EmptyInk => reject(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), None),
        RecognizeError::ZeroK => reject(StatusCode::BAD_REQUEST, e.to_string(), Some("k".into())),
        other => reject(StatusCode::BAD_REQUEST, other.to_string(), None),
    }
}

async fn recognize(State(rec): State<Arc<Recognizer>>, body: Bytes) -> Response {
    let req = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r.into_response(),
    };
    let result = tokio::task::spawn_blocking(move || rec.recognize(&req.ink(), req.k)).await;
    match result {
        Ok(Ok(out)) => Json(out).into_response(),
        Ok(Err(e)) => failure(e),
        Err(e) => reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

async fn feature_maps(State(rec): State<Arc<Recognizer>>, body: Bytes) -> Response {
    let req = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r.into_response(),
    };
    let result = tokio::task::spawn_blocking(move || rec.feature_maps(&req.ink())).await;
    match result {
        Ok(Ok(out)) => Json(out).into_response(),
        Ok(Err(e)) => failure(e),
        Err(e) => reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}
