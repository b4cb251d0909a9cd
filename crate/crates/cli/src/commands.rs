use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};
use volsplat_core::metrics::{luv_difference_image, psnr, ssim};
use volsplat_core::raster::ExecMode;
use volsplat_core::shading::LightConfig;
use volsplat_core::RgbaImage;
use volsplat_dvr::dataset::generate_dataset;
use volsplat_dvr::raymarch::render_view;
use volsplat_dvr::{fixtures, views, Dataset, TfSet, TransferFunction, VolumeSpec};
use volsplat_scene::render::render_mode;
use volsplat_scene::{
    apply_edits, format, quantize_model, BasicSceneModel, ComposedScene, EditState, EffectiveScene, QuantizeConfig,
    SceneError, SceneFile, Stage,
};
use volsplat_train::{init_transform, mean_psnr, optimize_to_reference, InverseConfig, TrainConfig, TrainData};

use crate::args::{resolve_camera, ViewCount};
use crate::error::{Failure, Result};
use crate::{ComposeArgs, EditArgs, EvalArgs, GenDataArgs, InvertArgs, QuantizeArgs, RenderArgs, ServeArgs, TrainArgs};

fn exec(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    }
}

/// `shells`, `shells-outer`, `shells-inner`, or a JSON file with one TF or an array.
pub fn load_tfs(spec: &str) -> Result<Vec<TransferFunction>> {
    match spec {
        "shells" => return Ok(vec![fixtures::outer_tf(), fixtures::inner_tf()]),
        "shells-outer" => return Ok(vec![fixtures::outer_tf()]),
        "shells-inner" => return Ok(vec![fixtures::inner_tf()]),
        _ => {}
    }
    let value: Value = serde_json::from_slice(&std::fs::read(spec)?)?;
    let tfs: Vec<TransferFunction> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    if tfs.is_empty() {
        return Err(Failure::invalid(format!("{spec} holds no transfer functions")));
    }
    for tf in &tfs {
        tf.validate()?;
    }
    Ok(tfs)
}

fn tf_dir_name(tf: &TransferFunction, i: usize) -> String {
    let clean: String = tf
        .name
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if clean.is_empty() || clean == "combined" || clean == "heldout" {
        format!("tf{i}")
    } else {
        clean
    }
}

pub fn gen_data(a: &GenDataArgs) -> Result<Value> {
    let spec = VolumeSpec::parse(&a.volume)?;
    let volume = spec.build()?;
    let tfs = load_tfs(&a.tf)?;
    let (lo, hi) = volume.bbox();
    let center = [0, 1, 2].map(|i| 0.5 * (lo[i] + hi[i]));
    let half = volume.half_extent().into_iter().fold(0.0, f64::max);
    let radius = fixtures::CAMERA_RADIUS * half;
    let fov = fixtures::CAMERA_FOV_Y;
    let (w, h) = a.res;
    let settings = fixtures::march_settings(a.light);

    let (counts, entropy) = match a.views {
        ViewCount::Fixed(n) => {
            views::rig_directions(n)?;
            (vec![n; tfs.len()], None)
        }
        ViewCount::Auto => {
            let probe = views::icosphere_cameras(0, radius, center, fov, w, h);
            let images: Vec<Vec<RgbaImage>> = tfs
                .iter()
                .map(|tf| {
                    let set = TfSet::single(tf.clone());
                    probe.iter().map(|c| render_view(&volume, &set, c, &settings).quantized()).collect()
                })
                .collect();
            let report = views::entropy_report(&images)?;
            (report.views.clone(), Some(report))
        }
    };

    let split = tfs.len() > 1;
    let mut scenes = Vec::new();
    for (i, (tf, &count)) in tfs.iter().zip(&counts).enumerate() {
        let sub = if split { tf_dir_name(tf, i) } else { String::new() };
        let dir = a.out.join(&sub);
        let set = TfSet::single(tf.clone());
        let cams = views::cameras_for(&views::rig_directions(count)?, radius, center, fov, w, h);
        generate_dataset(&volume, spec.clone(), &set, cams, &settings, &dir)?;
        if a.heldout > 0 {
            let cams = views::held_out_cameras(a.heldout, radius, center, fov, w, h);
            generate_dataset(&volume, spec.clone(), &set, cams, &settings, dir.join("heldout"))?;
        }
        scenes.push(json!({ "tf": tf.name, "dir": sub, "views": count }));
    }
    let mut combined = None;
    if split && a.heldout > 0 {
        let dir = a.out.join("combined");
        let cams = views::held_out_cameras(a.heldout, radius, center, fov, w, h);
        generate_dataset(&volume, spec.clone(), &TfSet::new(tfs.clone()), cams, &settings, &dir)?;
        combined = Some("combined");
    }
    let report = json!({ "scenes": scenes, "combined": combined, "entropy": entropy });
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("gen.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.stage1_iters {
        cfg.stage1_iters = v;
    }
    if let Some(v) = a.stage2_iters {
        cfg.stage2_iters = v;
    }
    if let Some(v) = a.sh_interval {
        cfg.sh_degree_interval = v;
    }
    if let Some(v) = a.init_count {
        cfg.init_count = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.sequential |= a.sequential;
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: &TrainArgs) -> Result<Value> {
    let cfg = train_config(a)?;
    let ds = Dataset::load(&a.data)?;
    let eval_dir = a.eval.clone().or_else(|| {
        let d = a.data.join("heldout");
        d.join(volsplat_dvr::dataset::MANIFEST_FILE).exists().then_some(d)
    });
    let mut data = TrainData::from_dataset(&ds);
    if let Some(dir) = &eval_dir {
        data = data.with_eval(&Dataset::load(dir)?);
    }
    let start = Instant::now();
    let (base, out) = volsplat_train::train(&data, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();

    let (base_psnr, editable_psnr) = if data.eval.is_empty() {
        (None, None)
    } else {
        (
            Some(mean_psnr(&base, &data.eval, cfg.exec())?),
            Some(mean_psnr(&out.model, &data.eval, cfg.exec())?),
        )
    };
    let mut model = out.model;
    model.meta.info = json!({
        "base_psnr": base_psnr,
        "editable_psnr": editable_psnr,
        "stage1_iters": cfg.stage1_iters,
        "stage2_iters": cfg.stage2_iters,
        "seed": cfg.seed,
    });
    format::save(&SceneFile::single(model.clone()), &a.out)?;
    if let Some(p) = &a.base_out {
        format::save(&SceneFile::single(base.clone()), p)?;
    }
    if let Some(p) = &a.log {
        let mut lines = String::new();
        for r in &out.log {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        std::fs::write(p, lines)?;
    }
    Ok(json!({
        "out": a.out,
        "primitives": model.len(),
        "base_primitives": base.len(),
        "base_psnr": base_psnr,
        "editable_psnr": editable_psnr,
        "eval": eval_dir,
        "seconds": seconds,
    }))
}

pub fn quantize(a: &QuantizeArgs) -> Result<Value> {
    if a.k < 1 {
        return Err(Failure::invalid("--k must be >= 1"));
    }
    let model = format::load(&a.input)?.into_model()?;
    let cfg = QuantizeConfig {
        k: [a.k; 8],
        seed: a.seed,
    };
    let q = quantize_model(&model, &cfg)?;
    format::save(&SceneFile::quantized(q), &a.out)?;
    let before = format::encode(&SceneFile::single(model))?.len();
    let after = std::fs::metadata(&a.out)?.len() as usize;
    Ok(json!({
        "out": a.out,
        "dense_bytes": before,
        "quantized_bytes": after,
        "ratio": before as f64 / after as f64,
    }))
}

/// Any file as a composed scene (editable models only).
pub fn load_scene(path: &Path) -> Result<ComposedScene> {
    Ok(format::load(path)?.into_scene()?)
}

pub fn compose(a: &ComposeArgs) -> Result<Value> {
    let scenes = a.inputs.iter().map(|p| load_scene(p)).collect::<Result<Vec<_>>>()?;
    let scene = volsplat_scene::compose::compose_scenes(scenes)?;
    format::save(&SceneFile::composed(&scene), &a.out)?;
    Ok(json!({ "out": a.out, "scenes": scene.scene_count(), "primitives": scene.len() }))
}

/// A loaded file: a composed scene, or a single base-stage model.
pub enum Loaded {
    Scene(ComposedScene),
    Base(BasicSceneModel),
}

impl Loaded {
    pub fn open(path: &Path) -> Result<Self> {
        let file = format::load(path)?;
        if file.models.iter().all(|m| m.stage() == Stage::Editable) {
            Ok(Loaded::Scene(file.into_scene()?))
        } else if file.models.len() == 1 {
            Ok(Loaded::Base(file.into_model()?))
        } else {
            Err(SceneError::MixedStage.into())
        }
    }

    pub fn bbox(&self) -> [[f64; 3]; 2] {
        match self {
            Loaded::Scene(s) => s.bbox(),
            Loaded::Base(m) => ComposedScene {
                models: vec![m.clone()],
                edits: EditState::identity(1, LightConfig::headlight()),
            }
            .bbox(),
        }
    }

    /// Render-ready scene; `light` replaces the light direction and keeps
    /// the edited term scales.
    pub fn effective(&self, light: Option<LightConfig>) -> Result<EffectiveScene> {
        match self {
            Loaded::Scene(s) => {
                let mut s = s.clone();
                if let Some(l) = light {
                    let scales = s.edits.light.term_scales;
                    s.edits.light = LightConfig { term_scales: scales, ..l };
                }
                Ok(apply_edits(&s)?)
            }
            Loaded::Base(m) => {
                let l = light.or(m.meta.light).unwrap_or_default();
                Ok(EffectiveScene::from_model(m, l)?)
            }
        }
    }
}

pub fn render(a: &RenderArgs) -> Result<Value> {
    let loaded = Loaded::open(&a.model)?;
    let cam = resolve_camera(&a.camera, loaded.bbox())?;
    let scene = loaded.effective(a.light)?;
    let img = render_mode(&scene, &cam, a.mode, exec(a.sequential))?;
    img.save_png(&a.out)?;
    Ok(json!({ "out": a.out, "mode": a.mode, "width": cam.width, "height": cam.height }))
}

pub fn apply_edit_args(scene: &mut ComposedScene, a: &EditArgs) -> Result<()> {
    let per_scene = a.palette.is_some() || a.reset_palette || a.opacity_scale.is_some();
    match (a.scene, per_scene) {
        (None, true) => return Err(Failure::invalid("--palette, --reset-palette and --opacity-scale need --scene")),
        (Some(i), _) if i >= scene.scene_count() => {
            return Err(Failure::invalid(format!("scene {i} out of range (scene has {})", scene.scene_count())))
        }
        _ => {}
    }
    let edits = &mut scene.edits;
    if let Some(i) = a.scene {
        let e = &mut edits.scenes[i];
        if let Some(p) = a.palette {
            e.palette = Some(p);
        }
        if a.reset_palette {
            e.palette = None;
        }
        if let Some(o) = a.opacity_scale {
            e.opacity_scale = o;
        }
    }
    if let Some(l) = a.light {
        edits.light = LightConfig {
            term_scales: edits.light.term_scales,
            ..l
        };
    }
    if let Some(s) = a.term_scales {
        edits.light.term_scales = s;
    }
    if let Some(b) = a.term_bias {
        edits.term_bias = b;
    }
    edits.validate(scene.models.len())?;
    Ok(())
}

pub fn edit(a: &EditArgs) -> Result<Value> {
    let mut scene = load_scene(&a.model)?;
    apply_edit_args(&mut scene, a)?;
    format::save(&SceneFile::composed(&scene), &a.out)?;
    Ok(json!({ "out": a.out, "edits": scene.edits }))
}

pub fn invert(a: &InvertArgs) -> Result<Value> {
    let mut scene = load_scene(&a.model)?;
    let cam = resolve_camera(&a.camera, scene.bbox())?;
    let reference = RgbaImage::load_png(&a.reference)?;
    let cfg = InverseConfig {
        iters: a.iters,
        lr: a.lr,
        sequential: a.sequential,
        ..InverseConfig::default()
    };
    let init = init_transform(&scene);
    let fit = optimize_to_reference(&scene, &init, &reference, &cam, &cfg, |_, _| true)?;
    scene.edits = fit.params.to_edits(&scene.edits);
    scene.edits.validate(scene.scene_count())?;
    format::save(&SceneFile::composed(&scene), &a.out)?;
    if let Some(p) = &a.render {
        render_mode(&apply_edits(&scene)?, &cam, volsplat_scene::RenderMode::Shaded, exec(a.sequential))?.save_png(p)?;
    }
    Ok(json!({
        "out": a.out,
        "psnr": fit.psnr,
        "final_loss": fit.losses.last(),
        "edits": scene.edits,
    }))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Per-view PSNR and SSIM of shaded renders against a dataset.
pub fn evaluate(loaded: &Loaded, ds: &Dataset, exec: ExecMode, heatmaps: Option<&Path>) -> Result<Value> {
    let scene = loaded.effective(Some(ds.manifest.light))?;
    if let Some(dir) = heatmaps {
        std::fs::create_dir_all(dir)?;
    }
    let mut rows = Vec::new();
    for (i, (cam, gt)) in ds.cameras().iter().zip(&ds.images).enumerate() {
        let img = render_mode(&scene, cam, volsplat_scene::RenderMode::Shaded, exec)?;
        let p = psnr(&img, gt)?;
        let s = ssim(&img, gt)?;
        let mut row = json!({ "view": i, "file": cam.file, "psnr": p, "ssim": s });
        if let Some(dir) = heatmaps {
            let (heat, dist) = luv_difference_image(&img, gt)?;
            let name = PathBuf::from(cam.file.clone().unwrap_or_else(|| format!("view_{i:04}.png")));
            let path = dir.join(format!("luv_{}", name.file_name().and_then(|n| n.to_str()).unwrap_or("view.png")));
            heat.save_png(&path)?;
            row["mean_luv"] = json!(mean(dist.iter().copied()));
            row["heatmap"] = json!(path);
        }
        rows.push(row);
    }
    let mean_psnr = mean(rows.iter().map(|r| r["psnr"].as_f64().unwrap_or(f64::NAN)));
    let mean_ssim = mean(rows.iter().map(|r| r["ssim"].as_f64().unwrap_or(f64::NAN)));
    Ok(json!({ "views": rows, "mean_psnr": mean_psnr, "mean_ssim": mean_ssim }))
}

pub fn eval(a: &EvalArgs) -> Result<Value> {
    let loaded = Loaded::open(&a.model)?;
    let ds = Dataset::load(&a.data)?;
    let report = evaluate(&loaded, &ds, exec(a.sequential), a.heatmaps.as_deref())?;
    std::fs::write(&a.report, serde_json::to_vec_pretty(&report)?)?;
    Ok(json!({ "report": a.report, "mean_psnr": report["mean_psnr"], "mean_ssim": report["mean_ssim"] }))
}

pub fn serve(a: &ServeArgs) -> Result<Value> {
    use volsplat_service::{AppState, ServiceConfig};
    let config = ServiceConfig {
        exec: exec(a.sequential),
        ..ServiceConfig::default()
    };
    let state = match &a.model {
        Some(p) => AppState::with_scene(config, load_scene(p)?).map_err(|e| Failure::new("Service", e.to_string()))?,
        None => AppState::new(config),
    };
    let addr = std::net::SocketAddr::new(a.bind, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(volsplat_service::serve(Arc::new(state), addr))?;
    Ok(json!({ "stopped": addr.to_string() }))
}
