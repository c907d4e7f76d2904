//! HTTP layer over [`ReviewStore`]: the queue, item detail, annotation
//! submission, corrected counts, frame images and training export.
//!
//! Routes:
//! - `GET  /api/queue?site=&status=`
//! - `GET  /api/items/{id}`
//! - `POST /api/items/{id}/annotations`
//! - `GET  /api/counts?site=`
//! - `GET  /api/frames/{file}/{index}` (PGM)
//! - `POST /api/export`
//! - `POST /api/uploads` (edge bundle ingest)

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use sonarflow_core::analytics::CountSummary;
use sonarflow_core::pgm::frame_to_pgm;
use sonarflow_core::review::{
    summarize, AnnotationInput, CorrectedCounts, EdgeUpload, ExpertAnnotation, QueueSummary,
    ReviewItem, ReviewStatus, ReviewStore,
};
use sonarflow_core::sraw::SrawReader;
use sonarflow_core::Error;

pub struct AppState {
    pub store: ReviewStore,
    pub confidence_threshold: f64,
}

impl AppState {
    pub fn open(data_dir: &Path, confidence_threshold: f64) -> sonarflow_core::Result<Self> {
        if !(0.0..=1.0).contains(&confidence_threshold) {
            return Err(Error::Domain(format!(
                "confidence threshold {confidence_threshold} outside [0, 1]"
            )));
        }
        Ok(Self {
            store: ReviewStore::open(data_dir)?,
            confidence_threshold,
        })
    }
}

/// Error body `{"error": "..."}` with a status derived from the core error.
#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::Domain(_) | Error::Record { .. } | Error::Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs store I/O off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> sonarflow_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("invalid body: {e}")))
}

#[derive(Debug, Deserialize)]
pub struct QueueQuery {
    pub site: Option<String>,
    pub status: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueueResponse {
    pub items: Vec<ReviewItem>,
    pub summary: QueueSummary,
}

async fn queue(
    State(st): State<Arc<AppState>>,
    Query(q): Query<QueueQuery>,
) -> ApiResult<Json<QueueResponse>> {
    let status = match q.status.as_deref().filter(|s| !s.is_empty()) {
        None => None,
        Some(s) => Some(
            ReviewStatus::parse(s).ok_or_else(|| bad_request(format!("unknown status {s:?}")))?,
        ),
    };
    let site = q.site.as_deref().filter(|s| !s.is_empty());
    let items = st.store.queue(site, status);
    let summary = summarize(&items);
    Ok(Json(QueueResponse { items, summary }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemResponse {
    pub item: ReviewItem,
    pub annotations: Vec<ExpertAnnotation>,
}

async fn item(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<ItemResponse>> {
    let item = st.store.item(&id)?;
    Ok(Json(ItemResponse {
        annotations: st.store.annotations(&id),
        item,
    }))
}

async fn annotate(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<ReviewItem>> {
    let input: AnnotationInput = parse_body(&body)?;
    let item = blocking(move || st.store.submit(&id, input, Utc::now())).await?;
    log::info!("item {} resolved as {:?}", item.item_id, item.status);
    Ok(Json(item))
}

#[derive(Debug, Deserialize)]
pub struct CountsQuery {
    pub site: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CountsResponse {
    pub site: String,
    pub pipeline: CountSummary,
    pub corrected: CorrectedCounts,
    pub queue: QueueSummary,
}

async fn counts(
    State(st): State<Arc<AppState>>,
    Query(q): Query<CountsQuery>,
) -> ApiResult<Json<CountsResponse>> {
    let site = q
        .site
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad_request("site is required"))?;
    Ok(Json(CountsResponse {
        pipeline: st.store.pipeline_counts(&site),
        corrected: st.store.corrected_counts(&site),
        queue: summarize(&st.store.queue(Some(&site), None)),
        site,
    }))
}

/// Plain file names only; anything that could leave `frames/` is refused.
fn safe_file_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

async fn frame(
    State(st): State<Arc<AppState>>,
    UrlPath((file, index)): UrlPath<(String, u32)>,
) -> ApiResult<Response> {
    if !safe_file_name(&file) {
        return Err(bad_request(format!("invalid frame file {file:?}")));
    }
    let path = st.store.data_dir().join("frames").join(&file);
    if !path.is_file() {
        return Err(ApiError(
            StatusCode::NOT_FOUND,
            format!("frame file {file}"),
        ));
    }
    let pgm = blocking(move || {
        let mut reader = SrawReader::open(&path)?;
        if index >= reader.header().frame_count {
            return Err(Error::NotFound(format!("frame {index} of {file}")));
        }
        Ok(frame_to_pgm(&reader.read_frame(index)?))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], pgm).into_response())
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct ExportRequest {
    #[serde(default)]
    pub site: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportResponse {
    pub path: PathBuf,
    pub rows: usize,
}

async fn export(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<ExportResponse>> {
    let req: ExportRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ExportRequest::default()
    } else {
        parse_body(&body)?
    };
    let site = req.site.filter(|s| !s.is_empty());
    let name = match &site {
        Some(s) if safe_file_name(s) => format!("{s}.csv"),
        Some(s) => return Err(bad_request(format!("invalid site id {s:?}"))),
        None => "all.csv".to_string(),
    };
    let path = st.store.data_dir().join("exports").join(name);
    let out = path.clone();
    let rows = blocking(move || st.store.export_training_set(site.as_deref(), &out)).await?;
    Ok(Json(ExportResponse { path, rows }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UploadResponse {
    pub flagged: Vec<String>,
}

async fn upload(
    State(st): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<UploadResponse>)> {
    let upload: EdgeUpload = parse_body(&body)?;
    let flagged = blocking(move || {
        st.store
            .ingest(&upload, st.confidence_threshold, Utc::now())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(UploadResponse { flagged })))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/items/{id}", get(item))
        .route("/api/items/{id}/annotations", post(annotate))
        .route("/api/counts", get(counts))
        .route("/api/frames/{file}/{index}", get(frame))
        .route("/api/export", post(export))
        .route("/api/uploads", post(upload))
        .with_state(state)
}

/// Ingests every `<data_dir>/inbox/*.json` upload not already recorded, in
/// file name order. Returns the number of uploads ingested.
pub fn ingest_inbox(state: &AppState) -> sonarflow_core::Result<usize> {
    let inbox = state.store.data_dir().join("inbox");
    if !inbox.is_dir() {
        return Ok(0);
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&inbox)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut n = 0;
    for path in paths {
        let upload: EdgeUpload = serde_json::from_slice(&std::fs::read(&path)?)
            .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
        if state.store.has_upload(&upload.site_id, &upload.upload_id) {
            continue;
        }
        let flagged = state
            .store
            .ingest(&upload, state.confidence_threshold, Utc::now())?;
        log::info!(
            "ingested {} ({} items flagged)",
            path.display(),
            flagged.len()
        );
        n += 1;
    }
    Ok(n)
}

/// Serves the API on `listener` until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    log::info!("review service listening on http://{addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
