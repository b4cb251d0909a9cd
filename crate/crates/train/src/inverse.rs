//! Inverse exploration: fit per-scene palettes and opacity scales, the
//! global term transform and (orbital) light angles of a frozen composed
//! scene to one reference image.

use serde::{Deserialize, Serialize};
use volsplat_core::losses::photometric;
use volsplat_core::math::{clamp01, sigmoid, softplus, softplus_inverse};
use volsplat_core::metrics::psnr;
use volsplat_core::raster::ExecMode;
use volsplat_core::render::{render, render_backward, MapGrads, RenderSettings, SplatGeometry};
use volsplat_core::shading::{light_angle_grad, shade, shade_backward, Light, LightMode, SplatShading, TermTransform};
use volsplat_core::{Camera, RgbaImage};
use volsplat_scene::compose::EffectiveAppearance;
use volsplat_scene::render::render_image;
use volsplat_scene::{apply_edits, ComposedScene, EditState, SceneEdit};

use crate::adam::{AdamVec, EPSILON_DENSE};
use crate::error::{Result, TrainError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub palettes: Vec<[f64; 3]>,
    /// Opacity scale is `softplus(opacity_raw)`.
    pub opacity_raw: Vec<f64>,
    /// `lambda * (k_a, k_d, k_s, beta) + b`.
    pub lambda: [f64; 4],
    pub bias: [f64; 4],
    pub polar: f64,
    pub azimuth: f64,
    pub learn_light: bool,
}

/// Identity parameters: the scene's current edit state.
pub fn init_transform(scene: &ComposedScene) -> TransformParams {
    let e = &scene.edits;
    TransformParams {
        palettes: (0..scene.scene_count()).map(|i| scene.palette(i).map(|v| v as f64)).collect(),
        opacity_raw: e.scenes.iter().map(|s| softplus_inverse(s.opacity_scale as f64)).collect(),
        lambda: e.light.term_scales,
        bias: e.term_bias,
        polar: e.light.polar,
        azimuth: e.light.azimuth,
        learn_light: e.light.mode == LightMode::Orbital,
    }
}

impl TransformParams {
    pub fn opacity_scales(&self) -> Vec<f64> {
        self.opacity_raw.iter().map(|&r| softplus(r)).collect()
    }

    /// Edit state carrying these parameters on top of `base`.
    pub fn to_edits(&self, base: &EditState) -> EditState {
        let mut light = base.light;
        light.term_scales = self.lambda;
        if self.learn_light {
            light.polar = self.polar;
            light.azimuth = self.azimuth;
        }
        EditState {
            scenes: self
                .palettes
                .iter()
                .zip(self.opacity_scales())
                .map(|(p, s)| SceneEdit {
                    palette: Some(p.map(|v| clamp01(v) as f32)),
                    opacity_scale: s as f32,
                })
                .collect(),
            light,
            term_bias: self.bias,
        }
    }

    fn flatten(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.palettes.iter().flatten().copied().collect();
        x.extend(&self.opacity_raw);
        x.extend(self.lambda);
        x.extend(self.bias);
        x.extend([self.polar, self.azimuth]);
        x
    }

    fn unflatten(&mut self, x: &[f64]) {
        let k = self.palettes.len();
        for (i, p) in self.palettes.iter_mut().enumerate() {
            *p = [0, 1, 2].map(|c| x[3 * i + c].clamp(0.0, 1.0));
        }
        self.opacity_raw.copy_from_slice(&x[3 * k..4 * k]);
        let at = 4 * k;
        self.lambda = [0, 1, 2, 3].map(|j| x[at + j].max(0.0));
        self.bias = [0, 1, 2, 3].map(|j| x[at + 4 + j]);
        use std::f64::consts::{FRAC_PI_2, PI};
        self.polar = x[at + 8].clamp(-FRAC_PI_2, FRAC_PI_2);
        let a = x[at + 9];
        self.azimuth = if (-PI..=PI).contains(&a) { a } else { (a + PI).rem_euclid(2.0 * PI) - PI };
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    pub iters: usize,
    pub lr: f64,
    pub l1_weight: f64,
    pub ssim_weight: f64,
    /// Adam epsilon. The dense default keeps an exact match a fixed point;
    /// 1e-15 (the splat-training value) turns roundoff gradients into steps.
    pub epsilon: f64,
    pub sequential: bool,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            iters: 1000,
            lr: 0.01,
            l1_weight: 0.8,
            ssim_weight: 0.2,
            epsilon: EPSILON_DENSE,
            sequential: false,
        }
    }
}

impl InverseConfig {
    fn exec(&self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseResult {
    pub params: TransformParams,
    /// Loss before each update.
    pub losses: Vec<f64>,
    /// PSNR of the fitted render against the reference.
    pub psnr: f64,
}

/// Frozen per-splat data the fit reads every iteration.
struct Frozen {
    mu: Vec<[f32; 3]>,
    rotation: Vec<[f32; 4]>,
    scale: Vec<[f32; 3]>,
    opacity: Vec<f32>,
    normal: Vec<[f32; 3]>,
    scene_id: Vec<u32>,
    offset: Vec<[f32; 3]>,
    terms: Vec<[f32; 4]>,
}

fn frozen(scene: &ComposedScene) -> Result<Frozen> {
    // unscaled opacities and raw palettes come from the identity edit state
    let eff = ComposedSceneRef {
        scene,
        edits: EditState::identity(scene.scene_count(), scene.edits.light),
    }
    .apply()?;
    let EffectiveAppearance::Shading { offset, terms, .. } = eff.appearance else {
        unreachable!("apply_edits returns shading appearance")
    };
    Ok(Frozen {
        mu: eff.mu,
        rotation: eff.rotation,
        scale: eff.scale,
        opacity: eff.opacity,
        normal: eff.normal,
        scene_id: eff.scene_id,
        offset,
        terms,
    })
}

struct ComposedSceneRef<'a> {
    scene: &'a ComposedScene,
    edits: EditState,
}

impl ComposedSceneRef<'_> {
    fn apply(&self) -> Result<volsplat_scene::EffectiveScene> {
        let s = ComposedScene {
            models: self.scene.models.clone(),
            edits: self.edits.clone(),
        };
        Ok(apply_edits(&s)?)
    }
}

/// Loss and flattened parameter gradient for `params`.
fn loss_and_grad(
    f: &Frozen,
    params: &TransformParams,
    base_light: volsplat_core::shading::LightConfig,
    reference: &RgbaImage,
    cam: &Camera,
    cfg: &InverseConfig,
) -> Result<(f64, Vec<f64>)> {
    let k = params.palettes.len();
    let n = f.mu.len();
    let scales = params.opacity_scales();
    let scales32: Vec<f32> = scales.iter().map(|&s| s as f32).collect();
    let opacity: Vec<f32> = (0..n)
        .map(|i| {
            let s = scales32[f.scene_id[i] as usize];
            if s == 1.0 {
                f.opacity[i]
            } else {
                clamp01(s * f.opacity[i])
            }
        })
        .collect();
    let palettes: Vec<[f32; 3]> = params.palettes.iter().map(|p| p.map(|v| clamp01(v) as f32)).collect();
    let transform = TermTransform {
        scale: params.lambda.map(|v| v as f32),
        bias: params.bias.map(|v| v as f32),
    };
    let mut light_cfg = base_light;
    if params.learn_light {
        light_cfg.polar = params.polar;
        light_cfg.azimuth = params.azimuth;
    }
    let light: Light<f32> = light_cfg.light();
    let cam_pos = cam.position.map(|v| v as f32);
    let shading = |i: usize| SplatShading {
        palette: palettes[f.scene_id[i] as usize],
        offset: f.offset[i],
        terms: f.terms[i],
        normal: f.normal[i],
        mu: f.mu[i],
    };
    let mut feats = Vec::with_capacity(3 * n);
    for i in 0..n {
        feats.extend_from_slice(&shade(&shading(i), &light, &transform, cam_pos).rgb());
    }
    let geom = SplatGeometry {
        mu: &f.mu,
        rotation: &f.rotation,
        scale: &f.scale,
        opacity: &opacity,
    };
    let settings = RenderSettings {
        depth: false,
        normals: false,
        mode: cfg.exec(),
    };
    let (out, state) = render(&geom, &feats, 3, None, cam, &settings)?;
    let npix = out.pixel_count();
    // same final clamp as the displayed image; clamped values pass no gradient
    let mut pred = Vec::with_capacity(4 * npix);
    let mut pass = vec![true; 4 * npix];
    for p in 0..npix {
        let a = out.alpha[p];
        let ac = a.clamp(0.0, 1.0);
        for c in 0..3 {
            let v = out.features[3 * p + c];
            pred.push(v.clamp(0.0, ac));
            pass[4 * p + c] = v >= 0.0 && v <= ac;
        }
        pred.push(ac);
        pass[4 * p + 3] = (0.0..=1.0).contains(&a);
    }
    let (w, h) = (cam.width as usize, cam.height as usize);
    // f64 loss keeps the gradient at an exact match at roundoff level
    let pred: Vec<f64> = pred.iter().map(|&v| v as f64).collect();
    let target: Vec<f64> = reference.data.iter().map(|&v| v as f64).collect();
    let (loss, g) = photometric(&pred, &target, w, h, cfg.l1_weight, cfg.ssim_weight)?;
    let g: Vec<f32> = g.into_iter().map(|v| v as f32).collect();
    let mut g_feat = vec![0.0f32; 3 * npix];
    let mut g_alpha = vec![0.0f32; npix];
    for p in 0..npix {
        for c in 0..3 {
            if pass[4 * p + c] {
                g_feat[3 * p + c] = g[4 * p + c];
            }
        }
        if pass[4 * p + 3] {
            g_alpha[p] = g[4 * p + 3];
        }
    }
    let rg = render_backward(
        &geom,
        None,
        &state,
        &MapGrads {
            features: &g_feat,
            alpha: &g_alpha,
            depth: None,
            normal: None,
        },
    )?;

    let mut grad = vec![0.0f64; 4 * k + 10];
    let mut g_dir = [0.0f64; 3];
    for i in 0..n {
        let sid = f.scene_id[i] as usize;
        let gr = [rg.features[3 * i], rg.features[3 * i + 1], rg.features[3 * i + 2]];
        if gr != [0.0; 3] {
            let sg = shade_backward(&shading(i), &light, &transform, cam_pos, gr, gr, gr[0] + gr[1] + gr[2]);
            for c in 0..3 {
                grad[3 * sid + c] += sg.palette[c] as f64;
            }
            for j in 0..4 {
                grad[4 * k + j] += sg.transform_scale[j] as f64;
                grad[4 * k + 4 + j] += sg.transform_bias[j] as f64;
            }
            for a in 0..3 {
                g_dir[a] += sg.light_dir[a] as f64;
            }
        }
        let pre = scales32[sid] * f.opacity[i];
        if pre > 0.0 && pre < 1.0 {
            grad[3 * k + sid] += rg.opacity[i] as f64 * f.opacity[i] as f64;
        }
    }
    for (s, &raw) in params.opacity_raw.iter().enumerate() {
        grad[3 * k + s] *= sigmoid(raw);
    }
    if params.learn_light && base_light.mode == LightMode::Orbital {
        let [gp, ga] = light_angle_grad(params.polar, params.azimuth, g_dir);
        grad[4 * k + 8] = gp;
        grad[4 * k + 9] = ga;
    }
    Ok((loss, grad))
}

/// Edited render of `scene` under `params`.
pub fn render_with(scene: &ComposedScene, params: &TransformParams, cam: &Camera, exec: ExecMode) -> Result<RgbaImage> {
    let view = ComposedSceneRef {
        scene,
        edits: params.to_edits(&scene.edits),
    };
    Ok(render_image(&view.apply()?, cam, exec)?)
}

/// Adam on the transform parameters only; the scene is never modified.
/// `progress(iteration, loss)` runs after every update and may return
/// `false` to stop early.
pub fn optimize_to_reference(
    scene: &ComposedScene,
    init: &TransformParams,
    reference: &RgbaImage,
    cam: &Camera,
    cfg: &InverseConfig,
    mut progress: impl FnMut(usize, f64) -> bool,
) -> Result<InverseResult> {
    if (reference.width, reference.height) != (cam.width, cam.height) {
        return Err(volsplat_core::CoreError::ShapeMismatch(format!(
            "reference {}x{} vs camera {}x{}",
            reference.width, reference.height, cam.width, cam.height
        ))
        .into());
    }
    if init.palettes.len() != scene.scene_count() || init.opacity_raw.len() != scene.scene_count() {
        return Err(TrainError::Config("transform parameters do not match the scene count".into()));
    }
    let f = frozen(scene)?;
    let mut params = init.clone();
    let mut x = params.flatten();
    let mut adam = AdamVec::with_epsilon(x.len(), cfg.epsilon);
    let mut losses = Vec::with_capacity(cfg.iters);
    for iter in 0..cfg.iters {
        let (loss, grad) = loss_and_grad(&f, &params, scene.edits.light, reference, cam, cfg)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::DivergedLoss { iteration: iter });
        }
        losses.push(loss);
        adam.step(&mut x, &grad, cfg.lr);
        params.unflatten(&x);
        // keep the optimizer state consistent with the projection
        x = params.flatten();
        if !progress(iter + 1, loss) {
            break;
        }
    }
    let fitted = render_with(scene, &params, cam, cfg.exec())?;
    let psnr = psnr(&fitted, reference)?;
    Ok(InverseResult { params, losses, psnr })
}
