//! Read-only HTTP API over a dataset root.
//!
//! | Method | Path | Response |
//! |---|---|---|
//! | GET | `/api/scenes` | JSON list of [`SceneSummary`] sorted by id |
//! | GET | `/api/scenes/{id}/component/{name}` | PNG, or the raw PFM with `?format=pfm` or `Accept: image/x-portable-floatmap` |
//! | POST | `/api/relight` | PNG of a [`RelightRequest`], timing in `X-Compute-Ms` |
//!
//! Errors are `{"error": "..."}` with a matching status code.

mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use flashlab::formation::{relight, K_MAX, K_MIN};
use flashlab::imgcore::{encode_png, read_pfm, srgb_encode};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub use store::{SceneStore, SceneSummary, DECOMPOSITION_DIR, SERVED_COMPONENTS};

pub const DEFAULT_BIND: &str = "127.0.0.1:8787";
pub const COMPUTE_HEADER: &str = "x-compute-ms";
pub const PFM_MIME: &str = "image/x-portable-floatmap";

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Internal(#[from] flashlab::Error),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Png,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelightRequest {
    pub scene_id: String,
    /// Flash strength, `>= 0`.
    pub kappa: f64,
    /// Ambient strength, `>= 0`.
    pub alpha: f64,
    /// Target ambient temperature in kelvin.
    pub kelvin: f64,
    #[serde(default)]
    pub output: OutputFormat,
}

impl RelightRequest {
    pub fn validate(&self) -> Result<(), ApiError> {
        for (name, v) in [("kappa", self.kappa), ("alpha", self.alpha)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ApiError::Unprocessable(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(K_MIN..=K_MAX).contains(&self.kelvin) {
            return Err(ApiError::Unprocessable(format!(
                "kelvin must lie in [{K_MIN}, {K_MAX}], got {}",
                self.kelvin
            )));
        }
        Ok(())
    }
}

/// PNG bytes of a relit scene.
pub fn relight_png(store: &SceneStore, req: &RelightRequest) -> Result<Vec<u8>, ApiError> {
    req.validate()?;
    if !store.contains(&req.scene_id) {
        return Err(ApiError::NotFound(format!("unknown scene {}", req.scene_id)));
    }
    let d = store
        .decomposition(&req.scene_id)
        .ok_or_else(|| ApiError::NotFound(format!("scene {} has no decomposition", req.scene_id)))?;
    let img = relight(d, req.kappa, req.alpha, req.kelvin)?;
    Ok(encode_png(&srgb_encode(&img))?)
}

type Shared = State<Arc<SceneStore>>;

async fn scenes(State(store): Shared) -> Json<Vec<SceneSummary>> {
    Json(store.summaries())
}

#[derive(Deserialize)]
struct ComponentQuery {
    format: Option<String>,
}

async fn component(
    State(store): Shared,
    Path((id, name)): Path<(String, String)>,
    Query(q): Query<ComponentQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    if !store.contains(&id) {
        return Err(ApiError::NotFound(format!("unknown scene {id}")));
    }
    let path = store
        .component_path(&id, &name)
        .filter(|p| p.exists())
        .ok_or_else(|| ApiError::NotFound(format!("scene {id} has no component {name}")))?;
    let wants_pfm = match q.format.as_deref() {
        Some("pfm") => true,
        Some("png") | None => headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains(PFM_MIME)),
        Some(other) => return Err(ApiError::Unprocessable(format!("unknown format {other}"))),
    };
    let (mime, body) = if wants_pfm {
        let bytes = std::fs::read(&path).map_err(|e| flashlab::Error::Io { path: path.clone(), source: e })?;
        (PFM_MIME, bytes)
    } else {
        ("image/png", encode_png(&srgb_encode(&read_pfm(&path)?))?)
    };
    Ok(([(header::CONTENT_TYPE, mime)], body).into_response())
}

async fn relight_handler(State(store): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: RelightRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid relight request: {e}")))?;
    req.validate()?;
    let started = Instant::now();
    let png = tokio::task::spawn_blocking(move || relight_png(&store, &req))
        .await
        .map_err(|e| ApiError::Internal(flashlab::Error::InvalidArgument(format!("relight task failed: {e}"))))??;
    let ms = started.elapsed().as_secs_f64() * 1e3;
    let mut res = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("{ms:.3}")) {
        res.headers_mut().insert(COMPUTE_HEADER, v);
    }
    Ok(res)
}

/// The API routes with CORS enabled for any origin.
pub fn router(store: Arc<SceneStore>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE, header::ACCEPT])
        .expose_headers([header::HeaderName::from_static(COMPUTE_HEADER)]);
    Router::new()
        .route("/api/scenes", get(scenes))
        .route("/api/scenes/{id}/component/{name}", get(component))
        .route("/api/relight", post(relight_handler))
        .layer(cors)
        .with_state(store)
}

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub root: PathBuf,
    pub bind: SocketAddr,
    /// Static files served for every path outside `/api`.
    pub ui_dir: Option<PathBuf>,
}

/// Loads the store and serves until the process is stopped.
pub async fn serve(cfg: ServeConfig) -> flashlab::Result<()> {
    let store = Arc::new(SceneStore::open(&cfg.root)?);
    let mut app = router(store);
    if let Some(dir) = &cfg.ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let io = |e| flashlab::Error::Io { path: cfg.root.clone(), source: e };
    let listener = tokio::net::TcpListener::bind(cfg.bind).await.map_err(io)?;
    log::info!("serving {} on http://{}", cfg.root.display(), cfg.bind);
    axum::serve(listener, app).await.map_err(io)
}
