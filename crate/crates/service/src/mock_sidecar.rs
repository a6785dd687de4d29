//! In-process stand-in for the model backend, serving `/v1/generate` and
//! `/v1/embed` from the deterministic mocks.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use ptd_core::embed::{EmbedRequest, EmbedResponse, Embedder, MockEmbedder};
use ptd_core::generation::{BackendError, GenerateRequest, GenerationBackend, MockBackend};
use ptd_core::store::FeatureMatrix;
use serde_json::json;

struct Mocks {
    backend: MockBackend,
    embedder: MockEmbedder,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn backend_error(e: BackendError) -> Response {
    match e {
        BackendError::Protocol(m) => error(StatusCode::BAD_REQUEST, m),
        BackendError::Transport(m) => error(StatusCode::INTERNAL_SERVER_ERROR, m),
    }
}

async fn generate(State(m): State<Arc<Mocks>>, body: Bytes) -> Response {
    let req: GenerateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let out = tokio::task::spawn_blocking(move || m.backend.generate(&req)).await;
    match out {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => backend_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn embed(State(m): State<Arc<Mocks>>, body: Bytes) -> Response {
    let req: EmbedRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let out = tokio::task::spawn_blocking(move || {
        let rows = m.embedder.embed(&req)?;
        let dim = m.embedder.dims.of(req.kind);
        let Some(path) = req.output_path.clone() else {
            return Ok(EmbedResponse {
                kind: req.kind,
                dim,
                rows,
                path: None,
                n_rows: None,
            });
        };
        let ids: Vec<u64> = (0..rows.len() as u64).collect();
        let matrix = FeatureMatrix::from_rows(req.kind, dim, &rows, &ids)
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        std::fs::write(&path, matrix.to_bytes())
            .map_err(|e| BackendError::Transport(format!("{path}: {e}")))?;
        Ok(EmbedResponse {
            kind: req.kind,
            dim,
            rows: Vec::new(),
            path: Some(path),
            n_rows: Some(matrix.n_rows()),
        })
    })
    .await;
    match out {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => backend_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn mock_sidecar_router(backend: MockBackend, embedder: MockEmbedder) -> Router {
    Router::new()
        .route("/v1/generate", post(generate))
        .route("/v1/embed", post(embed))
        .with_state(Arc::new(Mocks { backend, embedder }))
}
