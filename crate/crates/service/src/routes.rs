use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartError;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tokio::io::AsyncWriteExt;
use tower_http::cors::CorsLayer;
use tracing::{info, warn};
use uuid::Uuid;

use crate::job::{Artifacts, Job, JobState, PayloadKind};
use crate::payload::{inspect, sniff, unpack, Sniffed, SNIFF_LEN};
use crate::store::StoreError;
use crate::worker::{MODEL_FILE, PREVIEW_FILE};
use crate::Shared;

/// Multipart framing allowance on top of the capture size limit.
const MULTIPART_SLACK: u64 = 64 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    state: Option<JobState>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            state: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("job {id} not found"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match self.state {
            Some(state) => json!({ "error": self.message, "state": state }),
            None => json!({ "error": self.message }),
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::not_found(&id),
            e => ApiError::internal(e),
        }
    }
}

pub(crate) fn router(shared: Arc<Shared>) -> Router {
    let body_limit = shared.config.max_upload_bytes.saturating_add(MULTIPART_SLACK);
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route(
            "/jobs",
            axum::routing::post(submit).layer(DefaultBodyLimit::max(usize::try_from(body_limit).unwrap_or(usize::MAX))),
        )
        .route("/jobs/{id}", get(get_job).delete(delete_job))
        .route("/jobs/{id}/model.ply", get(download_model))
        .route("/jobs/{id}/preview.png", get(download_preview))
        .layer(CorsLayer::permissive())
        .with_state(shared)
}

/// Removes the staged upload unless it was moved into a job.
struct Staged(PathBuf);

impl Drop for Staged {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn multipart_error(e: MultipartError) -> ApiError {
    let status = e.status();
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "upload exceeds the size limit")
    } else {
        ApiError::new(status, e.body_text())
    }
}

async fn submit(State(shared): State<Arc<Shared>>, mut multipart: Multipart) -> Result<impl IntoResponse, ApiError> {
    let limit = shared.config.max_upload_bytes;
    let uploads = shared.config.data_root.join("uploads");
    tokio::fs::create_dir_all(&uploads).await.map_err(ApiError::internal)?;
    let staged = Staged(uploads.join(format!("{}.part", Uuid::new_v4().simple())));

    let mut received: Option<(Vec<u8>, u64)> = None;
    while let Some(mut field) = multipart.next_field().await.map_err(multipart_error)? {
        if field.name() != Some("capture") {
            continue;
        }
        let mut file = tokio::fs::File::create(&staged.0).await.map_err(ApiError::internal)?;
        let mut head = Vec::with_capacity(SNIFF_LEN);
        let mut size = 0u64;
        while let Some(chunk) = field.chunk().await.map_err(multipart_error)? {
            size += chunk.len() as u64;
            if size > limit {
                return Err(ApiError::new(
                    StatusCode::PAYLOAD_TOO_LARGE,
                    format!("upload exceeds the {limit}-byte limit"),
                ));
            }
            let take = (SNIFF_LEN - head.len()).min(chunk.len());
            head.extend_from_slice(&chunk[..take]);
            file.write_all(&chunk).await.map_err(ApiError::internal)?;
        }
        file.flush().await.map_err(ApiError::internal)?;
        received = Some((head, size));
        break;
    }
    let Some((head, size)) = received else {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty payload: no `capture` field"));
    };
    if size == 0 {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty payload"));
    }
    let sniffed = sniff(&head);
    let upload = match sniffed {
        Sniffed::Video("mp4/quicktime") => "upload.mp4",
        Sniffed::Video("avi") => "upload.avi",
        Sniffed::Video(_) => "upload.mkv",
        Sniffed::Tar => "upload.tar",
        Sniffed::Zip => "upload.zip",
        Sniffed::Unrecognized(detected) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("unrecognized payload: detected {detected}; expected a video, or a tar/zip archive of frames"),
            ))
        }
    };

    let id = Uuid::new_v4().simple().to_string();
    let dir = shared.store.job_dir(&id);
    tokio::fs::create_dir_all(&dir).await.map_err(ApiError::internal)?;
    tokio::fs::rename(&staged.0, dir.join(upload)).await.map_err(ApiError::internal)?;
    let mut artifacts = Artifacts {
        upload: upload.into(),
        ..Artifacts::default()
    };
    let payload = match sniffed {
        Sniffed::Video(_) => PayloadKind::Video,
        _ => {
            let archive = dir.join(upload);
            let input = dir.join("input");
            let layout = tokio::task::spawn_blocking(move || {
                unpack(&archive, sniffed, &input)?;
                inspect(&input)
            })
            .await
            .map_err(ApiError::internal)?;
            match layout {
                Ok(layout) => {
                    let under_input = |p: &Path| Path::new("input").join(p).to_string_lossy().into_owned();
                    artifacts.frames = Some(under_input(&layout.frames));
                    artifacts.sparse = layout.sparse.as_deref().map(under_input);
                    layout.kind
                }
                Err(e) => {
                    let _ = tokio::fs::remove_dir_all(&dir).await;
                    return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()));
                }
            }
        }
    };
    let job = Job::new(id.clone(), payload, artifacts);
    shared.store.insert(job.clone())?;
    info!(job = %id, ?payload, bytes = size, "job submitted");
    if shared.queue.send(id).is_err() {
        warn!("job queue is closed");
    }
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn get_job(State(shared): State<Arc<Shared>>, UrlPath(id): UrlPath<String>) -> Result<Json<Job>, ApiError> {
    shared.store.get(&id).map(Json).ok_or_else(|| ApiError::not_found(&id))
}

async fn delete_job(State(shared): State<Arc<Shared>>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    let store = shared.store.clone();
    tokio::task::spawn_blocking(move || store.remove(&id))
        .await
        .map_err(ApiError::internal)??;
    Ok(StatusCode::NO_CONTENT)
}

async fn artifact(shared: &Shared, id: &str, file: &str) -> Result<Bytes, ApiError> {
    let job = shared.store.get(id).ok_or_else(|| ApiError::not_found(id))?;
    if job.state != JobState::Ready {
        return Err(ApiError {
            status: StatusCode::CONFLICT,
            message: format!("job is {}, not ready", job.state),
            state: Some(job.state),
        });
    }
    let bytes = tokio::fs::read(shared.store.job_dir(id).join(file))
        .await
        .map_err(ApiError::internal)?;
    Ok(Bytes::from(bytes))
}

async fn download_model(State(shared): State<Arc<Shared>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let bytes = artifact(&shared, &id, MODEL_FILE).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"model.ply\""),
        ],
        bytes,
    )
        .into_response())
}

async fn download_preview(
    State(shared): State<Arc<Shared>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let bytes = artifact(&shared, &id, PREVIEW_FILE).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}
