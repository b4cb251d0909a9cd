//! The two optimization stages. Stage 1 fits geometry with SH colors and
//! normals; stage 2 replaces SH with palette + offset color and Blinn-Phong
//! terms and keeps refining geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use volsplat_core::losses::{
    bilateral_smoothness, normal_consistency, opacity_regularizer, photometric, pseudo_normals, sparsity,
};
use volsplat_core::math::{add, norm, sigmoid};
use volsplat_core::metrics::psnr;
use volsplat_core::render::{render, render_backward, MapGrads, RenderSettings, SplatGeometry};
use volsplat_core::sh::{eval_sh_at, eval_sh_at_backward};
use volsplat_core::shading::{map_terms, map_terms_derivative, shade, shade_backward, Light, SplatShading, TermTransform};
use volsplat_scene::compose::EffectiveScene;
use volsplat_scene::render::render_image;
use volsplat_scene::{BasicSceneModel, Stage};

use crate::config::TrainConfig;
use crate::data::{TrainData, View};
use crate::densify::{densify_and_prune, DensifyReport, GradStats};
use crate::error::{Result, TrainError};
use crate::splats::{ColorGrads, Colors, Grads, Splats};

/// Stage-2 feature layout: rgb, offset color, mapped terms.
const EDITABLE_CHANNELS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub photometric: f64,
    pub normal: f64,
    pub opacity: f64,
    pub sparsity: f64,
    pub smoothness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub stage: Stage,
    pub iteration: usize,
    pub view: usize,
    pub loss: LossBreakdown,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub densify: Option<DensifyReport>,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: BasicSceneModel,
    pub log: Vec<LogRecord>,
}

/// Loss, parameter gradients and per-primitive densification magnitudes
/// (`None` for primitives not visible in the view).
pub struct StepResult {
    pub loss: LossBreakdown,
    pub grads: Grads,
    pub magnitudes: Vec<Option<f64>>,
}

pub struct Trainer<'a> {
    data: &'a TrainData,
    cfg: &'a TrainConfig,
    pub splats: Splats,
    iters: usize,
    rng: ChaCha8Rng,
    extent: f64,
}

fn to_f64(v: f32) -> f64 {
    v as f64
}

impl<'a> Trainer<'a> {
    /// Stage-1 trainer starting from `init` (a base model).
    pub fn base(init: &BasicSceneModel, data: &'a TrainData, cfg: &'a TrainConfig) -> Result<Self> {
        if init.stage() != Stage::Base {
            return Err(volsplat_scene::SceneError::WrongStage { expected: "base" }.into());
        }
        Self::new(Splats::from_model(init), data, cfg, cfg.stage1_iters, 1)
    }

    /// Stage-2 trainer: SH dropped, palette frozen at the dataset's
    /// alpha-weighted foreground mean.
    pub fn editable(base: &BasicSceneModel, data: &'a TrainData, cfg: &'a TrainConfig) -> Result<Self> {
        if base.stage() != Stage::Base {
            return Err(volsplat_scene::SceneError::WrongStage { expected: "base" }.into());
        }
        let splats = Splats::from_model(base).to_editable(data.palette());
        Self::new(splats, data, cfg, cfg.stage2_iters, 2)
    }

    fn new(splats: Splats, data: &'a TrainData, cfg: &'a TrainConfig, iters: usize, stage: u64) -> Result<Self> {
        cfg.validate()?;
        data.check()?;
        Ok(Trainer {
            data,
            cfg,
            splats,
            iters,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(stage)),
            extent: data.extent(),
        })
    }

    fn stage(&self) -> Stage {
        if self.splats.is_editable() {
            Stage::Editable
        } else {
            Stage::Base
        }
    }

    fn sh_degree(&self, iter: usize) -> usize {
        (iter / self.cfg.sh_degree_interval).min(self.cfg.sh_degree)
    }

    pub fn model(&self) -> BasicSceneModel {
        self.splats.to_model(self.cfg.sh_degree, self.data.meta())
    }

    /// Per-splat feature rows for a camera.
    fn features(&self, cam_pos: [f32; 3], degree: usize) -> (Vec<f32>, usize) {
        let s = &self.splats;
        let n = s.len();
        match &s.colors {
            Colors::Sh { .. } => {
                let mut f = Vec::with_capacity(3 * n);
                for i in 0..n {
                    let c = s.sh_coeffs(i).expect("sh");
                    f.extend_from_slice(&eval_sh_at(&c, degree, s.mu.value[i], cam_pos));
                }
                (f, 3)
            }
            Colors::Shading { offset, terms } => {
                let light = self.data.light.light::<f32>();
                let transform = TermTransform::default();
                let mut f = Vec::with_capacity(EDITABLE_CHANNELS * n);
                for i in 0..n {
                    let k = map_terms(terms.value[i]);
                    let sh = SplatShading {
                        palette: s.palette,
                        offset: offset.value[i],
                        terms: k,
                        normal: s.normal.value[i],
                        mu: s.mu.value[i],
                    };
                    f.extend_from_slice(&shade(&sh, &light, &transform, cam_pos).rgb());
                    f.extend_from_slice(&offset.value[i]);
                    f.extend_from_slice(&k);
                }
                (f, EDITABLE_CHANNELS)
            }
        }
    }

    /// Loss and gradients on one view at iteration `iter`.
    pub fn loss_and_grads(&self, view: &View, iter: usize) -> Result<StepResult> {
        let cfg = self.cfg;
        let w = &cfg.weights;
        let s = &self.splats;
        let n = s.len();
        let cam = &view.camera;
        let (width, height) = (cam.width as usize, cam.height as usize);
        let npix = width * height;
        let cam_pos = cam.position.map(|v| v as f32);
        let degree = self.sh_degree(iter);

        let scale: Vec<[f32; 3]> = s.log_scale.value.iter().map(|l| l.map(f32::exp)).collect();
        let opacity: Vec<f32> = s.opacity.value.iter().map(|o| sigmoid(o[0])).collect();
        let geom = SplatGeometry {
            mu: &s.mu.value,
            rotation: &s.rotation.value,
            scale: &scale,
            opacity: &opacity,
        };
        let (feats, channels) = self.features(cam_pos, degree);
        let use_normals = w.normal_consistency > 0.0;
        let settings = RenderSettings {
            depth: use_normals,
            normals: use_normals,
            mode: cfg.exec(),
        };
        let (out, state) = render(&geom, &feats, channels, Some(&s.normal.value), cam, &settings)?;

        let mut pred = Vec::with_capacity(npix * 4);
        for p in 0..npix {
            pred.extend_from_slice(&out.features[p * channels..p * channels + 3]);
            pred.push(out.alpha[p]);
        }
        let (l_photo, g_photo) = photometric(&pred, &view.image.data, width, height, w.l1 as f32, w.ssim as f32)?;
        let mut loss = LossBreakdown {
            photometric: l_photo as f64,
            ..Default::default()
        };
        let mut g_feat = vec![0.0f32; npix * channels];
        let mut g_alpha = vec![0.0f32; npix];
        for p in 0..npix {
            g_feat[p * channels..p * channels + 3].copy_from_slice(&g_photo[p * 4..p * 4 + 3]);
            g_alpha[p] = g_photo[p * 4 + 3];
        }

        let mut g_normal_map = None;
        if use_normals {
            let depth = out.depth.as_ref().expect("depth requested");
            let target = pseudo_normals(depth, &out.alpha, cam)?;
            let rendered = out.normal.as_ref().expect("normals requested");
            let (l, g) = normal_consistency(rendered, &target.normals, &target.mask)?;
            loss.normal = l as f64;
            let k = w.normal_consistency as f32;
            g_normal_map = Some(g.into_iter().map(|v| v * k).collect::<Vec<f32>>());
        }

        let mut g_logit_reg = None;
        if self.stage() == Stage::Editable {
            if w.offset_sparsity > 0.0 {
                let (l, g) = sparsity(&out.feature_slice(3, 3));
                loss.sparsity = l as f64;
                let k = w.offset_sparsity as f32;
                for p in 0..npix {
                    for c in 0..3 {
                        g_feat[p * channels + 3 + c] += k * g[p * 3 + c];
                    }
                }
            }
            if w.bilateral_smoothness > 0.0 {
                let guide = view.image.rgb();
                let (l, g) = bilateral_smoothness(&out.feature_slice(6, 4), 4, &guide, width, height, None)?;
                loss.smoothness = l as f64;
                let k = w.bilateral_smoothness as f32;
                for p in 0..npix {
                    for c in 0..4 {
                        g_feat[p * channels + 6 + c] += k * g[p * 4 + c];
                    }
                }
            }
            if w.opacity_l1 > 0.0 {
                let logits: Vec<f32> = s.opacity.value.iter().map(|o| o[0]).collect();
                let (l, g) = opacity_regularizer(&logits);
                loss.opacity = l as f64;
                g_logit_reg = Some(g);
            }
        }
        loss.total = loss.photometric
            + w.normal_consistency * loss.normal
            + w.opacity_l1 * loss.opacity
            + w.offset_sparsity * loss.sparsity
            + w.bilateral_smoothness * loss.smoothness;
        if !loss.total.is_finite() {
            return Err(TrainError::DivergedLoss { iteration: iter });
        }

        let rg = render_backward(
            &geom,
            Some(&s.normal.value),
            &state,
            &MapGrads {
                features: &g_feat,
                alpha: &g_alpha,
                depth: None,
                normal: g_normal_map.as_deref(),
            },
        )?;

        let mut grads = s.zero_grads();
        for i in 0..n {
            grads.rotation[i] = rg.rotation[i];
            grads.log_scale[i] = [0, 1, 2].map(|k| rg.scale[i][k] * scale[i][k]);
            let o = opacity[i];
            grads.opacity[i] = [rg.opacity[i] * o * (1.0 - o)];
            grads.mu[i] = rg.mu[i];
            if use_normals {
                grads.normal[i] = rg.normals[i];
            }
        }
        if let Some(g) = g_logit_reg {
            let k = w.opacity_l1 as f32;
            for i in 0..n {
                grads.opacity[i][0] += k * g[i];
            }
        }
        match (&s.colors, &mut grads.colors) {
            (Colors::Sh { .. }, ColorGrads::Sh { dc, rest }) => {
                for i in 0..n {
                    let coeffs = s.sh_coeffs(i).expect("sh");
                    let g_rgb = [rg.features[3 * i], rg.features[3 * i + 1], rg.features[3 * i + 2]];
                    let mut gc = [[0.0f32; 3]; 16];
                    let g_mu = eval_sh_at_backward(&coeffs, degree, s.mu.value[i], cam_pos, g_rgb, &mut gc);
                    grads.mu[i] = add(grads.mu[i], g_mu);
                    dc[i] = gc[0];
                    for j in 0..15 {
                        rest[i][3 * j..3 * j + 3].copy_from_slice(&gc[j + 1]);
                    }
                }
            }
            (Colors::Shading { offset, terms }, ColorGrads::Shading { offset: g_off, terms: g_terms }) => {
                let light: Light<f32> = self.data.light.light();
                let transform = TermTransform::default();
                for i in 0..n {
                    let row = &rg.features[i * channels..(i + 1) * channels];
                    let g_rgb = [row[0], row[1], row[2]];
                    let raw = terms.value[i];
                    let sh = SplatShading {
                        palette: s.palette,
                        offset: offset.value[i],
                        terms: map_terms(raw),
                        normal: s.normal.value[i],
                        mu: s.mu.value[i],
                    };
                    let sg = shade_backward(&sh, &light, &transform, cam_pos, g_rgb, g_rgb, g_rgb[0] + g_rgb[1] + g_rgb[2]);
                    grads.mu[i] = add(grads.mu[i], sg.mu);
                    grads.normal[i] = add(grads.normal[i], sg.normal);
                    g_off[i] = [0, 1, 2].map(|c| sg.offset[c] + row[3 + c]);
                    let d = map_terms_derivative(raw);
                    g_terms[i] = [0, 1, 2, 3].map(|j| (sg.terms[j] + row[6 + j]) * d[j]);
                }
            }
            _ => unreachable!("gradient layout follows the splats"),
        }

        let half = [0.5 * width as f64, 0.5 * height as f64];
        let screen = state.screen();
        let magnitudes = (0..n)
            .map(|i| {
                screen[i].visible.then(|| {
                    let m = rg.mean2d[i];
                    let pos = (to_f64(m[0]) * half[0]).hypot(to_f64(m[1]) * half[1]);
                    pos + to_f64(norm(grads.normal[i]))
                })
            })
            .collect();
        Ok(StepResult { loss, grads, magnitudes })
    }

    fn apply(&mut self, grads: &Grads, iter: usize) {
        let lr = &self.cfg.lr;
        let t = iter as u64 + 1;
        let s = &mut self.splats;
        // stage 2 refines converged geometry at the end of the stage-1 decay
        let lr_mu = if s.is_editable() {
            lr.position_final * self.extent
        } else {
            lr.position(self.extent, iter, self.iters)
        };
        s.mu.step(&grads.mu, lr_mu, t);
        s.rotation.step(&grads.rotation, lr.rotation, t);
        s.log_scale.step(&grads.log_scale, lr.scale, t);
        s.opacity.step(&grads.opacity, lr.opacity, t);
        s.normal.step(&grads.normal, lr.normal, t);
        match (&mut s.colors, &grads.colors) {
            (Colors::Sh { dc, rest }, ColorGrads::Sh { dc: gd, rest: gr }) => {
                dc.step(gd, lr.sh_dc, t);
                rest.step(gr, lr.sh_rest, t);
            }
            (Colors::Shading { offset, terms }, ColorGrads::Shading { offset: go, terms: gt }) => {
                offset.step(go, lr.shading, t);
                terms.step(gt, lr.shading, t);
            }
            _ => unreachable!("gradient layout follows the splats"),
        }
        s.renormalize_rotations();
    }

    /// Mean PSNR of the current model over `views`.
    pub fn psnr(&self, views: &[View]) -> Result<f64> {
        mean_psnr(&self.model(), views, self.cfg.exec())
    }

    pub fn run(mut self) -> Result<TrainOutput> {
        let views = &self.data.views;
        let probe = if self.data.eval.is_empty() { &views[..1] } else { &self.data.eval[..1] };
        let mut stats = GradStats::new(self.splats.len());
        let mut log = Vec::new();
        let until = self.cfg.densify_until(self.iters);
        for iter in 0..self.iters {
            let vi = self.rng.random_range(0..views.len());
            let step = self.loss_and_grads(&views[vi], iter)?;
            for (i, m) in step.magnitudes.iter().enumerate() {
                if let Some(m) = m {
                    stats.add(i, *m);
                }
            }
            self.apply(&step.grads, iter);

            let done = iter + 1;
            let mut densify = None;
            if done > self.cfg.densify_from && done < until && done % self.cfg.densify_interval == 0 {
                densify = Some(densify_and_prune(&mut self.splats, &stats, self.cfg, self.extent, &mut self.rng));
                stats = GradStats::new(self.splats.len());
            }
            let log_now = self.cfg.log_interval > 0 && (done % self.cfg.log_interval == 0 || done == self.iters);
            if log_now || densify.is_some() {
                log.push(LogRecord {
                    stage: self.stage(),
                    iteration: done,
                    view: vi,
                    loss: step.loss,
                    count: self.splats.len(),
                    psnr: if log_now { Some(self.psnr(probe)?) } else { None },
                    densify,
                });
            }
        }
        Ok(TrainOutput {
            model: self.model(),
            log,
        })
    }
}

/// Mean PSNR of a model's shaded renders against `views` (headlight or the
/// model's recorded light).
pub fn mean_psnr(model: &BasicSceneModel, views: &[View], exec: volsplat_core::raster::ExecMode) -> Result<f64> {
    if views.is_empty() {
        return Err(TrainError::DatasetEmpty);
    }
    let light = model.meta.light.unwrap_or_default();
    let scene = EffectiveScene::from_model(model, light)?;
    let mut total = 0.0;
    for v in views {
        let img = render_image(&scene, &v.camera, exec)?;
        total += psnr(&img, &v.image)?;
    }
    Ok(total / views.len() as f64)
}

fn rng_for(cfg: &TrainConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed)
}

/// Stage 1 from the default bounding-box initialization.
pub fn train_base(data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    data.check()?;
    let init = crate::init::initialize(data, cfg, &mut rng_for(cfg));
    Trainer::base(&init, data, cfg)?.run()
}

/// Stage 1 from a caller-supplied base model.
pub fn train_base_from(init: &BasicSceneModel, data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutput> {
    Trainer::base(init, data, cfg)?.run()
}

pub fn train_editable(base: &BasicSceneModel, data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutput> {
    Trainer::editable(base, data, cfg)?.run()
}

/// Both stages; the log holds stage-1 records followed by stage-2 records.
pub fn train(data: &TrainData, cfg: &TrainConfig) -> Result<(BasicSceneModel, TrainOutput)> {
    let base = train_base(data, cfg)?;
    let mut edit = train_editable(&base.model, data, cfg)?;
    let mut log = base.log;
    log.append(&mut edit.log);
    edit.log = log;
    Ok((base.model, edit))
}
