//! HTTP and WebSocket handlers.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Multipart, Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use volsplat_core::shading::LightConfig;
use volsplat_core::{Camera, RgbaImage};
use volsplat_scene::render::render_mode;
use volsplat_scene::RenderMode;
use volsplat_train::InverseConfig;

use crate::error::{ApiError, ApiResult};
use crate::state::{AppState, EditRequest, JobReport, Snapshot};

pub const DEFAULT_POLAR: f64 = 0.3;
pub const DEFAULT_AZIMUTH: f64 = 0.6;
pub const DEFAULT_SIZE: u32 = 256;
pub const FOV_Y: f64 = 0.6;
/// Header carrying the revision a frame reflects.
pub const REVISION_HEADER: &str = "x-revision";

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/scene", get(scene_info))
        .route("/api/edit", post(edit))
        .route("/api/render", get(render_frame))
        .route("/api/invert", post(start_invert))
        .route("/api/invert/{id}", get(job))
        .route("/api/stream", get(stream))
        .with_state(state)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasicSceneInfo {
    pub index: usize,
    pub name: String,
    pub tf: serde_json::Value,
    pub palette: [f32; 3],
    pub trained_palette: [f32; 3],
    pub opacity_scale: f32,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneInfo {
    pub revision: u64,
    pub scenes: Vec<BasicSceneInfo>,
    pub light: LightConfig,
    pub term_bias: [f64; 4],
    pub count: usize,
    pub bbox: [[f64; 3]; 2],
    pub modes: Vec<RenderMode>,
}

impl SceneInfo {
    pub fn of(s: &Snapshot) -> Self {
        let scene = &s.scene;
        SceneInfo {
            revision: s.revision,
            scenes: scene
                .models
                .iter()
                .enumerate()
                .map(|(i, m)| BasicSceneInfo {
                    index: i,
                    name: m.meta.name.clone(),
                    tf: m.meta.tf.clone(),
                    palette: scene.palette(i),
                    trained_palette: m.palette,
                    opacity_scale: scene.edits.scenes[i].opacity_scale,
                    count: m.len(),
                })
                .collect(),
            light: scene.edits.light,
            term_bias: scene.edits.term_bias,
            count: scene.len(),
            bbox: scene.bbox(),
            modes: RenderMode::ALL.to_vec(),
        }
    }
}

async fn scene_info(State(state): State<Arc<AppState>>) -> ApiResult<Json<SceneInfo>> {
    let snap = state.current()?;
    Ok(Json(SceneInfo::of(&snap)))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EditResponse {
    pub revision: u64,
}

async fn edit(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<EditResponse>> {
    let req: EditRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("edit body: {e}")))?;
    let revision = state.edit(&req)?;
    Ok(Json(EditResponse { revision }))
}

/// Orbit camera around the scene center. Angles in radians; the radius
/// defaults to one that frames the scene bounds.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct OrbitView {
    pub polar: Option<f64>,
    pub azimuth: Option<f64>,
    pub radius: Option<f64>,
    pub width: Option<u32>,
    pub height: Option<u32>,
}

impl OrbitView {
    pub fn camera(&self, s: &Snapshot, max_dim: u32) -> ApiResult<Camera> {
        let w = self.width.unwrap_or(DEFAULT_SIZE);
        let h = self.height.unwrap_or(DEFAULT_SIZE);
        if w == 0 || h == 0 || w > max_dim || h > max_dim {
            return Err(ApiError::BadRequest(format!("frame size {w}x{h} outside 1..={max_dim}")));
        }
        let radius = match self.radius {
            Some(r) if r.is_finite() && r > 0.0 => r,
            Some(r) => return Err(ApiError::BadRequest(format!("radius {r} must be > 0"))),
            None => default_radius(s),
        };
        let polar = self.polar.unwrap_or(DEFAULT_POLAR);
        let azimuth = self.azimuth.unwrap_or(DEFAULT_AZIMUTH);
        if !polar.is_finite() || !azimuth.is_finite() {
            return Err(ApiError::BadRequest("camera angles must be finite".into()));
        }
        Ok(Camera::orbit(s.scene.center(), radius, polar, azimuth, FOV_Y, w, h))
    }
}

/// Distance at which the bounding sphere fills the vertical field of view.
pub fn default_radius(s: &Snapshot) -> f64 {
    let [lo, hi] = s.scene.bbox();
    let half_diag = 0.5 * (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
    (half_diag / (0.5 * FOV_Y).sin()).max(1e-3)
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct RenderQuery {
    pub polar: Option<f64>,
    pub azimuth: Option<f64>,
    pub radius: Option<f64>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    #[serde(default)]
    pub mode: RenderMode,
    /// Straight-alpha RGBA8 bytes instead of PNG.
    #[serde(default)]
    pub raw: bool,
}

/// Frame bytes for `cam`.
pub fn frame_bytes(s: &Snapshot, cam: &Camera, mode: RenderMode, raw: bool, state: &AppState) -> ApiResult<Vec<u8>> {
    let img = render_mode(&s.effective, cam, mode, state.config.exec)?;
    encode(&img, raw)
}

fn encode(img: &RgbaImage, raw: bool) -> ApiResult<Vec<u8>> {
    if raw {
        Ok(img.to_rgba8().into_raw())
    } else {
        img.to_png_bytes().map_err(|e| ApiError::Internal(e.to_string()))
    }
}

async fn render_frame(
    State(state): State<Arc<AppState>>,
    query: Result<Query<RenderQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let snap = state.current()?;
    let view = OrbitView {
        polar: q.polar,
        azimuth: q.azimuth,
        radius: q.radius,
        width: q.width,
        height: q.height,
    };
    let cam = view.camera(&snap, state.config.max_dim)?;
    let revision = snap.revision;
    let bytes = tokio::task::spawn_blocking(move || frame_bytes(&snap, &cam, q.mode, q.raw, &state))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let content_type = if q.raw { "application/octet-stream" } else { "image/png" };
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::HeaderName::from_static(REVISION_HEADER), revision.to_string()),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: u64,
}

async fn start_invert(State(state): State<Arc<AppState>>, mut form: Multipart) -> ApiResult<Json<JobCreated>> {
    state.current()?;
    let bad = |e: String| ApiError::BadRequest(e);
    let mut reference = None;
    let mut camera = None;
    let mut cfg = InverseConfig::default();
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| bad(e.body_text()))?;
        let text = || std::str::from_utf8(&data).map(str::trim).map_err(|e| bad(format!("{name}: {e}")));
        match name.as_str() {
            "reference" => {
                reference = Some(RgbaImage::from_png_bytes(&data).map_err(|e| bad(format!("reference: {e}")))?);
            }
            "camera" => {
                camera = Some(serde_json::from_slice::<Camera>(&data).map_err(|e| bad(format!("camera: {e}")))?);
            }
            "iters" => cfg.iters = text()?.parse().map_err(|e| bad(format!("iters: {e}")))?,
            "lr" => {
                cfg.lr = text()?.parse().map_err(|e| bad(format!("lr: {e}")))?;
                if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
                    return Err(bad("lr must be > 0".into()));
                }
            }
            other => return Err(bad(format!("unknown field `{other}`"))),
        }
    }
    let reference = reference.ok_or_else(|| bad("missing `reference` PNG".into()))?;
    let camera = camera.ok_or_else(|| bad("missing `camera` JSON".into()))?;
    cfg.sequential = matches!(state.config.exec, volsplat_core::raster::ExecMode::Sequential);
    let job_id = state.start_inverse(reference, camera, cfg)?;
    Ok(Json(JobCreated { job_id }))
}

async fn job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<JobReport>> {
    let id: u64 = id.parse().map_err(|_| ApiError::NotFound(format!("job `{id}`")))?;
    state.job(id).map(Json).ok_or_else(|| ApiError::NotFound(format!("job {id}")))
}

/// Either a full camera (the dataset schema) or orbit parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CameraSpec {
    Full(Camera),
    Orbit(OrbitView),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StreamRequest {
    pub camera: CameraSpec,
    #[serde(default)]
    pub mode: RenderMode,
    #[serde(default)]
    pub raw: bool,
}

async fn stream(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| serve_stream(socket, state))
}

/// One frame per request: 8-byte little-endian revision, then the image.
async fn serve_stream(mut socket: WebSocket, state: Arc<AppState>) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match stream_frame(&state, &text).await {
            Ok(bytes) => Message::Binary(bytes.into()),
            Err(e) => Message::Text(serde_json::json!({ "error": e.to_string(), "status": e.status().as_u16() }).to_string().into()),
        };
        if socket.send(reply).await.is_err() {
            break;
        }
    }
}

async fn stream_frame(state: &Arc<AppState>, text: &str) -> ApiResult<Vec<u8>> {
    let req: StreamRequest = serde_json::from_str(text).map_err(|e| ApiError::BadRequest(format!("stream request: {e}")))?;
    let snap = state.current()?;
    let cam = match req.camera {
        CameraSpec::Full(c) => {
            c.validate().map_err(ApiError::BadRequest)?;
            if c.width > state.config.max_dim || c.height > state.config.max_dim {
                return Err(ApiError::BadRequest("frame too large".into()));
            }
            c
        }
        CameraSpec::Orbit(o) => o.camera(&snap, state.config.max_dim)?,
    };
    let st = Arc::clone(state);
    let revision = snap.revision;
    let img = tokio::task::spawn_blocking(move || frame_bytes(&snap, &cam, req.mode, req.raw, &st))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let mut out = Vec::with_capacity(8 + img.len());
    out.extend_from_slice(&revision.to_le_bytes());
    out.extend_from_slice(&img);
    Ok(out)
}
