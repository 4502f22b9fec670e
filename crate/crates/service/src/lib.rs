//! Read-only HTTP+JSON API over fitted slide-chart artifacts.
//!
//! Routes:
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/health` | status and sizes |
//! | GET | `/slides` | slide summaries |
//! | GET | `/slides/{id}/chart` | 12 densities with sector angles |
//! | GET | `/slides/{id}/points` | distorted coordinates of every cell |
//! | GET | `/slides/{id}/explain` | chart, 78 variables, prediction, slacks |
//! | GET | `/ruleset` | rule set text and document |
//! | POST | `/nearest` | closest cells to a unit-disc point |
//! | GET | `/thumbnails/{cell_id}` | the cell's thumbnail file |
//!
//! Errors are `{"code": ..., "message": ...}` with a matching status.

mod index;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;

pub use index::{GridIndex, Hit};
pub use state::{
    CellPoint, ChartPayload, ConditionReport, Explanation, NearestCellsQuery, NearestPayload, Neighbor, PointsPayload,
    RuleReport, RuleSetPayload, Sector, SessionState, SlideSummary, DEFAULT_K, MODEL_FILE, RULES_FILE,
};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown slide `{0}`")]
    UnknownSlide(String),
    #[error("unknown cell `{0}`")]
    UnknownCell(String),
    #[error("cell `{0}` has no thumbnail")]
    NoThumbnail(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("failed to load artifacts: {0}")]
    ArtifactLoad(String),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSlide(_) => "unknown_slide",
            ServiceError::UnknownCell(_) => "unknown_cell",
            ServiceError::NoThumbnail(_) => "no_thumbnail",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::ArtifactLoad(_) => "artifact_load",
            ServiceError::BindFailure { .. } => "bind_failure",
            ServiceError::Io(_) => "io",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSlide(_) | ServiceError::UnknownCell(_) | ServiceError::NoThumbnail(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

type Shared = Arc<SessionState>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Health {
    pub status: String,
    pub slides: usize,
    pub cells: usize,
}

async fn health(State(s): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        slides: s.dataset.slides.len(),
        cells: s.n_cells(),
    })
}

async fn slides(State(s): State<Shared>) -> Json<Vec<SlideSummary>> {
    Json(s.slides())
}

async fn chart(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<ChartPayload> {
    s.chart(&id).map(Json)
}

async fn points(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<PointsPayload> {
    s.points(&id).map(Json)
}

async fn explain(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Explanation> {
    s.explain(&id).map(Json)
}

async fn ruleset(State(s): State<Shared>) -> Json<RuleSetPayload> {
    Json(s.ruleset_payload())
}

// Parsed by hand so malformed bodies get the JSON error shape.
async fn nearest(State(s): State<Shared>, body: Bytes) -> ApiResult<NearestPayload> {
    let query: NearestCellsQuery =
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(format!("invalid query: {e}")))?;
    if query.k == 0 {
        return Err(ServiceError::BadRequest("k must be positive".into()));
    }
    s.nearest_cells(&query).map(Json)
}

async fn thumbnail(State(s): State<Shared>, Path(cell_id): Path<String>) -> Result<Response, ServiceError> {
    let path = s.thumbnail_path(&cell_id)?;
    let bytes = std::fs::read(&path)?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("svg") => "image/svg+xml",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn not_found() -> Response {
    let body = ErrorBody {
        code: "not_found".into(),
        message: "no such route".into(),
    };
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/slides", get(slides))
        .route("/slides/{id}/chart", get(chart))
        .route("/slides/{id}/points", get(points))
        .route("/slides/{id}/explain", get(explain))
        .route("/ruleset", get(ruleset))
        .route("/nearest", post(nearest))
        .route("/thumbnails/{cell_id}", get(thumbnail))
        .fallback(not_found)
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(state: SessionState, addr: &str) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::BindFailure {
            addr: addr.to_string(),
            source,
        })?;
    let local: SocketAddr = listener.local_addr()?;
    eprintln!("listening on http://{local}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
