//! HTTP JSON API for human-evaluation sessions.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/sessions` | create the assignment (admin) |
//! | GET | `/api/sessions` | list sessions |
//! | GET | `/api/session/{id}/next` | next image, descriptor and progress |
//! | POST | `/api/session/{id}/rating` | submit or replace a rating |
//! | GET | `/api/report/stages` | mean ratings per cumulative stage |
//! | GET | `/api/report/curve` | representativeness vs CLIP quantile |
//! | GET | `/images/{image_id}.png` | session image |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ptd_core::eval::{
    aggregate_by_stage, create_sessions, rating_curve, EvalError, EvalSession, Progress, RatingLog,
    RatingSubmission,
};
use ptd_core::metrics::default_grid;
use ptd_core::store::{read_jsonl, DatasetLayout, ImageRecord, StoreError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// What raters see next to each image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorMode {
    #[default]
    Prompt,
    Texture,
}

impl std::str::FromStr for DescriptorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prompt" => Ok(Self::Prompt),
            "texture" => Ok(Self::Texture),
            _ => Err(format!("unknown descriptor mode `{s}` (prompt|texture)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub manifest: PathBuf,
    pub ratings: PathBuf,
    /// Defaults to `sessions.json` next to the rating log.
    pub sessions: Option<PathBuf>,
    pub descriptor: DescriptorMode,
    /// When set, `POST /api/sessions` requires `Authorization: Bearer <token>`.
    pub admin_token: Option<String>,
}

impl EvalConfig {
    pub fn sessions_path(&self) -> PathBuf {
        self.sessions.clone().unwrap_or_else(|| {
            self.ratings
                .parent()
                .unwrap_or(Path::new("."))
                .join("sessions.json")
        })
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {message}")]
    Sessions { path: PathBuf, message: String },
}

pub fn read_sessions(path: &Path) -> Result<Vec<EvalSession>, ServiceError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Sessions {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| ServiceError::Sessions {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_sessions(path: &Path, sessions: &[EvalSession]) -> Result<(), ServiceError> {
    let err = |e: &dyn std::fmt::Display| ServiceError::Sessions {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let text = serde_json::to_string_pretty(sessions).map_err(|e| err(&e))?;
    std::fs::write(path, text + "\n").map_err(|e| err(&e))
}

/// Image ids eligible for rating: every unflagged generated image,
/// regardless of later refinement.
pub fn rating_pool(records: &[ImageRecord]) -> Vec<u64> {
    records
        .iter()
        .filter(|r| !r.flagged)
        .map(|r| r.image_id)
        .collect()
}

pub struct EvalState {
    config: EvalConfig,
    layout: DatasetLayout,
    records: Vec<ImageRecord>,
    by_id: HashMap<u64, usize>,
    log: Mutex<RatingLog>,
}

impl EvalState {
    /// Loads the manifest and sessions, then replays the rating log.
    pub fn load(config: EvalConfig) -> Result<Self, ServiceError> {
        let records: Vec<ImageRecord> = read_jsonl(&config.manifest)?;
        let root = config
            .manifest
            .parent()
            .unwrap_or(Path::new("."))
            .to_path_buf();
        let sessions = read_sessions(&config.sessions_path())?;
        let log = RatingLog::open(&config.ratings, sessions)?;
        let by_id = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id, i))
            .collect();
        Ok(Self {
            config,
            layout: DatasetLayout::new(root),
            records,
            by_id,
            log: Mutex::new(log),
        })
    }

    fn record(&self, image_id: u64) -> Option<&ImageRecord> {
        self.by_id.get(&image_id).map(|&i| &self.records[i])
    }

    fn descriptor(&self, r: &ImageRecord) -> String {
        match self.config.descriptor {
            DescriptorMode::Prompt => r.prompt.clone(),
            DescriptorMode::Texture => r.texture_class().to_string(),
        }
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let status = match &e {
            EvalError::BadArgument(_) | EvalError::PoolTooSmall { .. } => StatusCode::BAD_REQUEST,
            EvalError::OutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            EvalError::UnknownSession(_) => StatusCode::NOT_FOUND,
            EvalError::ForeignImage { .. } => StatusCode::FORBIDDEN,
            EvalError::UnknownImage(_)
            | EvalError::Unrefined { .. }
            | EvalError::NoClipScore { .. } => StatusCode::CONFLICT,
            EvalError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Eval(e) => e.into(),
            other => ApiError(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

type Shared = Arc<EvalState>;

#[derive(Debug, Deserialize)]
struct CreateSessions {
    n_participants: usize,
    images_per: usize,
    #[serde(default)]
    seed: u64,
    /// Allow replacing sessions that already have ratings.
    #[serde(default)]
    force: bool,
}

async fn post_sessions(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<CreateSessions>,
) -> Result<Json<Vec<EvalSession>>, ApiError> {
    if let Some(token) = &s.config.admin_token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return Err(ApiError(
                StatusCode::UNAUTHORIZED,
                "admin token required".into(),
            ));
        }
    }
    let mut log = s.log.lock().unwrap();
    if !log.entries().is_empty() && !body.force {
        return Err(ApiError(
            StatusCode::CONFLICT,
            "ratings already exist; pass force to replace the assignment".into(),
        ));
    }
    let sessions = create_sessions(
        &rating_pool(&s.records),
        body.n_participants,
        body.images_per,
        body.seed,
    )?;
    write_sessions(&s.config.sessions_path(), &sessions)?;
    log.replace_sessions(sessions.clone());
    Ok(Json(sessions))
}

#[derive(Debug, Serialize)]
struct SessionSummary {
    session_id: String,
    participant: String,
    progress: Progress,
}

async fn list_sessions(State(s): State<Shared>) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    let log = s.log.lock().unwrap();
    let mut out = Vec::new();
    for session in log.sessions() {
        let (_, progress) = log.next(&session.session_id)?;
        out.push(SessionSummary {
            session_id: session.session_id.clone(),
            participant: session.participant.clone(),
            progress,
        });
    }
    Ok(Json(out))
}

/// Body of `GET /api/session/{id}/next`. Image fields are absent once every
/// image is rated.
#[derive(Debug, Serialize, Deserialize)]
pub struct NextImage {
    pub session_id: String,
    pub image_id: Option<u64>,
    pub image_url: Option<String>,
    pub descriptor: Option<String>,
    pub progress: Progress,
    pub done: bool,
}

fn next_for(s: &EvalState, log: &RatingLog, id: &str) -> Result<NextImage, ApiError> {
    let (next, progress) = log.next(id)?;
    let record = next.and_then(|i| s.record(i));
    Ok(NextImage {
        session_id: id.to_string(),
        image_id: next,
        image_url: next.map(|i| format!("/images/{i}.png")),
        descriptor: record.map(|r| s.descriptor(r)),
        done: next.is_none(),
        progress,
    })
}

async fn get_next(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<NextImage>, ApiError> {
    let log = s.log.lock().unwrap();
    Ok(Json(next_for(&s, &log, &id)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RatingAck {
    pub ok: bool,
    pub replaced: bool,
    pub next: NextImage,
}

async fn post_rating(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<RatingSubmission>,
) -> Result<Json<RatingAck>, ApiError> {
    let mut log = s.log.lock().unwrap();
    let replaced = log
        .entries()
        .iter()
        .any(|r| r.session_id == id && r.image_id == body.image_id);
    log.submit(&id, body)?;
    Ok(Json(RatingAck {
        ok: true,
        replaced,
        next: next_for(&s, &log, &id)?,
    }))
}

async fn report_stages(State(s): State<Shared>) -> Result<Response, ApiError> {
    let ratings = s.log.lock().unwrap().resolved();
    let table = aggregate_by_stage(&ratings, &s.records)?;
    Ok(Json(table).into_response())
}

#[derive(Debug, Deserialize)]
struct CurveQuery {
    /// Comma-separated quantiles.
    grid: Option<String>,
}

async fn report_curve(
    State(s): State<Shared>,
    Query(q): Query<CurveQuery>,
) -> Result<Response, ApiError> {
    let grid = match q.grid.as_deref() {
        None | Some("") => default_grid(),
        Some(g) => g
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("grid: {e}")))?,
    };
    let ratings = s.log.lock().unwrap().resolved();
    let curve = rating_curve(&ratings, &s.records, &grid)?;
    Ok(Json(curve).into_response())
}

async fn get_image(
    State(s): State<Shared>,
    UrlPath(file): UrlPath<String>,
) -> Result<Response, ApiError> {
    let not_found = || ApiError(StatusCode::NOT_FOUND, format!("no image {file}"));
    let id: u64 = file
        .strip_suffix(".png")
        .and_then(|v| v.parse().ok())
        .ok_or_else(not_found)?;
    let record = s.record(id).filter(|r| !r.flagged).ok_or_else(not_found)?;
    let rel = record.file_path.as_deref().ok_or_else(not_found)?;
    let bytes = tokio::fs::read(s.layout.resolve(rel))
        .await
        .map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

pub fn router(state: Arc<EvalState>) -> Router {
    Router::new()
        .route("/api/sessions", post(post_sessions).get(list_sessions))
        .route("/api/session/{id}/next", get(get_next))
        .route("/api/session/{id}/rating", post(post_rating))
        .route("/api/report/stages", get(report_stages))
        .route("/api/report/curve", get(report_curve))
        .route("/images/{file}", get(get_image))
        .with_state(state)
}

/// Serves the API until the process is stopped.
pub async fn serve(state: Arc<EvalState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "eval service listening on http://{}",
        listener.local_addr()?
    );
    axum::serve(listener, router(state)).await
}
