//! Live scene snapshots, the edit path and inverse jobs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use volsplat_core::raster::ExecMode;
use volsplat_core::shading::LightMode;
use volsplat_core::{Camera, RgbaImage};
use volsplat_scene::{apply_edits, ComposedScene, EditState, EffectiveScene};
use volsplat_train::{init_transform, optimize_to_reference, InverseConfig};

use crate::error::{ApiError, ApiResult};

/// One immutable revision of the loaded scene.
#[derive(Debug)]
pub struct Snapshot {
    pub scene: ComposedScene,
    pub effective: EffectiveScene,
    pub revision: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightEdit {
    pub mode: LightMode,
    #[serde(default)]
    pub polar: f64,
    #[serde(default)]
    pub azimuth: f64,
}

/// Body of `POST /api/edit`. `revision`, when given, must match the live
/// revision.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    #[serde(default)]
    pub revision: Option<u64>,
    #[serde(default)]
    pub scene: Option<usize>,
    #[serde(default)]
    pub palette: Option<[f32; 3]>,
    #[serde(default)]
    pub opacity_scale: Option<f32>,
    #[serde(default)]
    pub term_scales: Option<[f64; 4]>,
    #[serde(default)]
    pub term_bias: Option<[f64; 4]>,
    #[serde(default)]
    pub light: Option<LightEdit>,
}

impl EditRequest {
    fn apply(&self, edits: &EditState, scenes: usize) -> ApiResult<EditState> {
        let mut out = edits.clone();
        if self.palette.is_some() || self.opacity_scale.is_some() {
            let i = self
                .scene
                .ok_or_else(|| ApiError::BadRequest("palette and opacity_scale need a scene index".into()))?;
            if i >= scenes {
                return Err(ApiError::BadRequest(format!("scene {i} out of range ({scenes} scenes)")));
            }
            if let Some(p) = self.palette {
                out.scenes[i].palette = Some(p);
            }
            if let Some(s) = self.opacity_scale {
                out.scenes[i].opacity_scale = s;
            }
        } else if let Some(i) = self.scene {
            if i >= scenes {
                return Err(ApiError::BadRequest(format!("scene {i} out of range ({scenes} scenes)")));
            }
        }
        if let Some(t) = self.term_scales {
            out.light.term_scales = t;
        }
        if let Some(b) = self.term_bias {
            out.term_bias = b;
        }
        if let Some(l) = self.light {
            out.light.mode = l.mode;
            out.light.polar = l.polar;
            out.light.azimuth = l.azimuth;
        }
        out.validate(scenes)?;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

/// Polling snapshot of an inverse job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub status: JobStatus,
    pub iteration: usize,
    pub iters: usize,
    /// Loss before the latest update.
    pub loss: Option<f64>,
    /// Mean loss over the last [`SMOOTHING`] updates.
    pub smoothed_loss: Option<f64>,
    pub psnr: Option<f64>,
    /// Revision the fitted edits were published as.
    pub revision: Option<u64>,
    pub error: Option<String>,
}

pub const SMOOTHING: usize = 50;

#[derive(Clone, Copy, Debug)]
pub struct ServiceConfig {
    pub exec: ExecMode,
    /// Largest accepted frame side.
    pub max_dim: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            exec: ExecMode::Parallel,
            max_dim: 2048,
        }
    }
}

/// Shared service state: one writer for edits, lock-free readers of the
/// current snapshot.
pub struct AppState {
    pub config: ServiceConfig,
    live: RwLock<Option<Arc<Snapshot>>>,
    writer: Mutex<()>,
    jobs: Mutex<HashMap<u64, JobReport>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        AppState {
            config,
            live: RwLock::new(None),
            writer: Mutex::new(()),
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        }
    }

    pub fn with_scene(config: ServiceConfig, scene: ComposedScene) -> ApiResult<Self> {
        let s = Self::new(config);
        s.load(scene)?;
        Ok(s)
    }

    /// Replaces the loaded scene; the revision keeps counting up.
    pub fn load(&self, scene: ComposedScene) -> ApiResult<u64> {
        let _w = self.writer.lock().expect("writer lock");
        let revision = self.snapshot().map_or(0, |s| s.revision + 1);
        let effective = apply_edits(&scene)?;
        self.publish(Snapshot {
            scene,
            effective,
            revision,
        });
        Ok(revision)
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.live.read().expect("snapshot lock").clone()
    }

    pub fn current(&self) -> ApiResult<Arc<Snapshot>> {
        self.snapshot().ok_or(ApiError::NotLoaded)
    }

    fn publish(&self, s: Snapshot) {
        *self.live.write().expect("snapshot lock") = Some(Arc::new(s));
    }

    /// Applies an edit atomically and returns the new revision.
    pub fn edit(&self, req: &EditRequest) -> ApiResult<u64> {
        self.update(req.revision, |edits, scenes| req.apply(edits, scenes))
    }

    fn update(&self, expected: Option<u64>, f: impl FnOnce(&EditState, usize) -> ApiResult<EditState>) -> ApiResult<u64> {
        let _w = self.writer.lock().expect("writer lock");
        let cur = self.current()?;
        if let Some(expected) = expected {
            if expected != cur.revision {
                return Err(ApiError::Conflict {
                    expected,
                    current: cur.revision,
                });
            }
        }
        let edits = f(&cur.scene.edits, cur.scene.scene_count())?;
        let scene = ComposedScene {
            models: cur.scene.models.clone(),
            edits,
        };
        let effective = apply_edits(&scene)?;
        let revision = cur.revision + 1;
        self.publish(Snapshot {
            scene,
            effective,
            revision,
        });
        Ok(revision)
    }

    pub fn job(&self, id: u64) -> Option<JobReport> {
        self.jobs.lock().expect("jobs lock").get(&id).cloned()
    }

    fn set_job(&self, id: u64, f: impl FnOnce(&mut JobReport)) {
        if let Some(j) = self.jobs.lock().expect("jobs lock").get_mut(&id) {
            f(j);
        }
    }

    /// Starts an inverse fit on a background thread against the current
    /// snapshot. On success the fitted edits become the live state.
    pub fn start_inverse(self: &Arc<Self>, reference: RgbaImage, camera: Camera, cfg: InverseConfig) -> ApiResult<u64> {
        let snap = self.current()?;
        if (reference.width, reference.height) != (camera.width, camera.height) {
            return Err(ApiError::BadRequest(format!(
                "reference is {}x{} but the camera is {}x{}",
                reference.width, reference.height, camera.width, camera.height
            )));
        }
        camera.validate().map_err(ApiError::BadRequest)?;
        let id = self.next_job.fetch_add(1, Ordering::Relaxed);
        self.jobs.lock().expect("jobs lock").insert(
            id,
            JobReport {
                status: JobStatus::Running,
                iteration: 0,
                iters: cfg.iters,
                loss: None,
                smoothed_loss: None,
                psnr: None,
                revision: None,
                error: None,
            },
        );
        let state = Arc::clone(self);
        std::thread::spawn(move || state.run_inverse(id, snap, reference, camera, cfg));
        Ok(id)
    }

    fn run_inverse(&self, id: u64, snap: Arc<Snapshot>, reference: RgbaImage, camera: Camera, cfg: InverseConfig) {
        let init = init_transform(&snap.scene);
        let mut recent = std::collections::VecDeque::with_capacity(SMOOTHING);
        let fit = optimize_to_reference(&snap.scene, &init, &reference, &camera, &cfg, |iteration, loss| {
            if recent.len() == SMOOTHING {
                recent.pop_front();
            }
            recent.push_back(loss);
            let smoothed = recent.iter().sum::<f64>() / recent.len() as f64;
            self.set_job(id, |j| {
                j.iteration = iteration;
                j.loss = Some(loss);
                j.smoothed_loss = Some(smoothed);
            });
            true
        });
        let outcome = fit.map_err(|e| ApiError::Internal(e.to_string())).and_then(|r| {
            let rev = self.update(None, |edits, scenes| {
                if scenes != r.params.palettes.len() {
                    return Err(ApiError::Internal("scene changed while the job ran".into()));
                }
                Ok(r.params.to_edits(edits))
            })?;
            Ok((r.psnr, rev))
        });
        self.set_job(id, |j| match outcome {
            Ok((psnr, rev)) => {
                j.status = JobStatus::Done;
                j.psnr = Some(psnr);
                j.revision = Some(rev);
            }
            Err(e) => {
                log::warn!("inverse job {id} failed: {e}");
                j.status = JobStatus::Failed;
                j.error = Some(e.to_string());
            }
        });
    }
}
