//! HTTP routes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::{ServeDir, ServeFile};

use vidseek_core::catalog::{Granularity, Metric, DEFAULT_NEIGHBOR_RADIUS};
use vidseek_core::index::SpaceIndex;
use vidseek_core::store::{NewSubmission, SubmissionRecord, TranscriptLine};

use crate::error::ApiError;
use crate::search::{run_search, SearchRequest};
use crate::AppState;

pub const MEDIA_PREFIX: &str = "/media";

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/api/search", post(search))
        .route("/api/frames/{frame_id}/neighbors", get(neighbors))
        .route("/api/submissions", post(submit).get(list_submissions))
        .route("/api/catalog", get(catalog))
        .route("/api/spaces", get(spaces))
        .route("/api/videos/{video_id}/transcript", get(transcript))
        .route("/api/health", get(health));
    if let Some(root) = &state.config.static_root {
        app = app.nest_service(MEDIA_PREFIX, ServeDir::new(root));
    }
    if let Some(root) = &state.config.console_root {
        app = app.fallback_service(ServeDir::new(root).fallback(ServeFile::new(root.join("index.html"))));
    }
    app.with_state(state)
}

fn media_url(path: &str) -> String {
    format!("{MEDIA_PREFIX}/{}", path.trim_start_matches('/'))
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("bad_json", e.to_string()))
}

async fn search(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: SearchRequest = parse_json(&body)?;
    let engine = state.engine().await?;
    let (body, timings) = run_search(&engine, &state.embedders, &req, state.config.default_top).await?;
    let bytes = serde_json::to_vec(&body).map_err(|e| ApiError::Internal(e.to_string()))?;
    let mut resp = (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], bytes).into_response();
    if let Ok(v) = HeaderValue::from_str(&timings.header_value()) {
        resp.headers_mut().insert("server-timing", v);
    }
    Ok(resp)
}

#[derive(Deserialize)]
struct NeighborsQuery {
    radius: Option<String>,
}

#[derive(Serialize)]
struct FrameView {
    frame_id: u32,
    video_id: String,
    frame_index: u32,
    timestamp_ms: u64,
    image_path: String,
    image_url: String,
    is_anchor: bool,
    deduped: bool,
}

#[derive(Serialize)]
struct Playback {
    video_id: String,
    timestamp_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    video_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    video_url: Option<String>,
}

#[derive(Serialize)]
struct NeighborsBody {
    anchor: u32,
    radius: usize,
    frames: Vec<FrameView>,
    playback: Playback,
}

fn parse_id(raw: &str, what: &str) -> Result<u32, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request("bad_id", format!("{what} must be a non-negative integer, got {raw:?}")))
}

async fn neighbors(
    State(state): State<Arc<AppState>>,
    Path(frame_id): Path<String>,
    Query(q): Query<NeighborsQuery>,
) -> Result<Json<NeighborsBody>, ApiError> {
    let frame_id = parse_id(&frame_id, "frame_id")?;
    let radius = match q.radius.as_deref() {
        None => DEFAULT_NEIGHBOR_RADIUS,
        Some(r) => r.parse().map_err(|_| {
            ApiError::bad_request(
                "bad_radius",
                format!("radius must be a non-negative integer, got {r:?}"),
            )
        })?,
    };
    let engine = state.engine().await?;
    let catalog = engine.catalog();
    let anchor = catalog.frame(frame_id)?;
    let video = catalog.video(&anchor.video_id)?;
    let frames = catalog
        .neighbors(frame_id, radius)?
        .into_iter()
        .map(|n| {
            let f = catalog.frame(n.frame_id).expect("neighbor exists");
            FrameView {
                frame_id: f.frame_id,
                video_id: f.video_id.clone(),
                frame_index: f.frame_index,
                timestamp_ms: f.timestamp_ms,
                image_path: f.image_path.clone(),
                image_url: media_url(&f.image_path),
                is_anchor: n.is_anchor,
                deduped: catalog.is_removed(f.frame_id),
            }
        })
        .collect();
    Ok(Json(NeighborsBody {
        anchor: frame_id,
        radius,
        frames,
        playback: Playback {
            video_id: video.video_id.clone(),
            timestamp_ms: anchor.timestamp_ms,
            video_url: video.video_path.as_deref().map(media_url),
            video_path: video.video_path.clone(),
        },
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    frame_id: u32,
    #[serde(default)]
    query_text: String,
}

async fn submit(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<SubmissionRecord>), ApiError> {
    let body: SubmitBody = parse_json(&body)?;
    let engine = state.engine().await?;
    let frame = engine.catalog().frame(body.frame_id)?;
    let new = NewSubmission {
        frame_id: frame.frame_id,
        video_id: frame.video_id.clone(),
        timestamp_ms: frame.timestamp_ms,
        query_text: body.query_text,
    };
    let st = state.clone();
    let record = tokio::task::spawn_blocking(move || st.submissions.append(new))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn list_submissions(State(state): State<Arc<AppState>>) -> Json<Vec<SubmissionRecord>> {
    Json(state.submissions.list())
}

#[derive(Serialize)]
struct VideoView {
    video_id: String,
    frame_count: u32,
    clip_count: u32,
    first_frame_id: u32,
    first_clip_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    video_path: Option<String>,
    color_index: usize,
}

#[derive(Serialize)]
struct CatalogBody {
    num_videos: usize,
    num_frames: usize,
    num_clips: usize,
    dedup_removed: usize,
    videos: Vec<VideoView>,
}

async fn catalog(State(state): State<Arc<AppState>>) -> Result<Json<CatalogBody>, ApiError> {
    let engine = state.engine().await?;
    let c = engine.catalog();
    let palette = engine.options().palette_size;
    Ok(Json(CatalogBody {
        num_videos: c.videos().len(),
        num_frames: c.num_frames(),
        num_clips: c.num_clips(),
        dedup_removed: c.dedup_removed().len(),
        videos: c
            .videos()
            .iter()
            .map(|v| VideoView {
                video_id: v.video_id.clone(),
                frame_count: v.frame_count,
                clip_count: v.clip_count(),
                first_frame_id: v.first_frame_id,
                first_clip_id: v.first_clip_id,
                video_path: v.video_path.clone(),
                color_index: vidseek_core::engine::color_index(&v.video_id, palette),
            })
            .collect(),
    }))
}

#[derive(Serialize)]
struct IndexView {
    kind: &'static str,
    rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    nlist: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    default_nprobe: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
}

#[derive(Serialize)]
struct SpaceView {
    space_id: String,
    dim: usize,
    granularity: Granularity,
    metric: Metric,
    index: IndexView,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedder: Option<&'static str>,
}

fn index_view(index: &SpaceIndex) -> IndexView {
    IndexView {
        kind: index.kind(),
        rows: index.rows(),
        nlist: index.ivf().map(|i| i.nlist()),
        default_nprobe: index.ivf().map(|i| i.default_nprobe()),
        m: match index {
            SpaceIndex::IvfPq { codebook, .. } => Some(codebook.m()),
            _ => None,
        },
    }
}

async fn spaces(State(state): State<Arc<AppState>>) -> Result<Json<Vec<SpaceView>>, ApiError> {
    let engine = state.engine().await?;
    Ok(Json(
        engine
            .spaces()
            .map(|s| SpaceView {
                space_id: s.space.space_id.clone(),
                dim: s.space.dim,
                granularity: s.space.granularity,
                metric: s.space.metric,
                index: index_view(&s.index),
                embedder: state.embedders.kind(&s.space.space_id).map(|k| k.label()),
            })
            .collect(),
    ))
}

async fn transcript(
    State(state): State<Arc<AppState>>,
    Path(video_id): Path<String>,
) -> Result<Json<Vec<TranscriptLine>>, ApiError> {
    let engine = state.engine().await?;
    Ok(Json(engine.transcript(&video_id)?.to_vec()))
}

#[derive(Serialize)]
struct HealthSpace {
    space_id: String,
    index: IndexView,
}

#[derive(Serialize)]
struct HealthBody {
    status: &'static str,
    videos: usize,
    frames: usize,
    clips: usize,
    dedup_removed: usize,
    submissions: usize,
    spaces: Vec<HealthSpace>,
}

async fn health(State(state): State<Arc<AppState>>) -> Result<Json<HealthBody>, ApiError> {
    let engine = state.engine().await?;
    let c = engine.catalog();
    Ok(Json(HealthBody {
        status: "ok",
        videos: c.videos().len(),
        frames: c.num_frames(),
        clips: c.num_clips(),
        dedup_removed: c.dedup_removed().len(),
        submissions: state.submissions.list().len(),
        spaces: engine
            .spaces()
            .map(|s| HealthSpace {
                space_id: s.space.space_id.clone(),
                index: index_view(&s.index),
            })
            .collect(),
    }))
}
