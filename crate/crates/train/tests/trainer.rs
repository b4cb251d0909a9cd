mod common;

use common::{flat_data, shells_data};
use volsplat_core::losses::{photometric, LossWeights};
use volsplat_core::math::logit;
use volsplat_core::render::{render, render_backward, MapGrads, RenderSettings, SplatGeometry};
use volsplat_core::sh::dc_from_rgb;
use volsplat_core::RgbaImage;
use volsplat_scene::render::{render_image, shade_all};
use volsplat_scene::{Appearance, BasicSceneModel, EffectiveScene, Geometry, Stage};
use volsplat_train::{foreground_palette, train, train_base, train_base_from, train_editable, TrainConfig, TrainError, Trainer};

fn quick(stage1: usize, stage2: usize) -> TrainConfig {
    TrainConfig {
        stage1_iters: stage1,
        stage2_iters: stage2,
        init_count: 300,
        densify_from: 20,
        densify_interval: 20,
        sh_degree_interval: 20,
        log_interval: 10,
        sequential: true,
        ..Default::default()
    }
}

#[test]
fn zero_iterations_return_the_initialization() {
    let data = shells_data(24);
    let init = common::base_model(3, 40);
    let cfg = TrainConfig {
        stage1_iters: 0,
        sh_degree: 0,
        ..quick(0, 0)
    };
    let out = train_base_from(&init, &data, &cfg).unwrap();
    assert_eq!(out.model.geometry, init.geometry);
    assert_eq!(out.model.appearance, init.appearance);
    assert!(out.log.is_empty());
}

#[test]
fn single_splat_fits_a_flat_target() {
    let target = [0.2 * 0.6, 0.7 * 0.6, 0.4 * 0.6, 0.6];
    let data = flat_data(16, target);
    let init = BasicSceneModel {
        geometry: Geometry {
            mu: vec![[0.0; 3]],
            rotation: vec![[1.0, 0.0, 0.0, 0.0]],
            log_scale: vec![[50f32.ln(); 3]],
            opacity_logit: vec![logit(0.3) as f32],
            normal: vec![[1.0, 0.0, 0.0]],
        },
        appearance: Appearance::Sh {
            degree: 0,
            coeffs: vec![[dc_from_rgb(0.5) as f32; 3]],
        },
        palette: [0.5; 3],
        meta: Default::default(),
    };
    let cfg = TrainConfig {
        stage1_iters: 500,
        sh_degree: 0,
        densify_from: 100_000,
        ..quick(500, 0)
    };
    let out = train_base_from(&init, &data, &cfg).unwrap();
    assert_eq!(out.model.len(), 1);
    let scene = EffectiveScene::from_model(&out.model, data.light).unwrap();
    let img = render_image(&scene, &data.views[0].camera, Default::default()).unwrap();
    let worst = img.data.iter().zip(&data.views[0].image.data).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(worst < 1.0 / 255.0, "max error {worst}");
}

#[test]
fn same_seed_gives_the_same_model() {
    let data = shells_data(24);
    let cfg = quick(60, 30);
    let (b1, e1) = train(&data, &cfg).unwrap();
    let (b2, e2) = train(&data, &cfg).unwrap();
    assert_eq!(b1, b2);
    assert_eq!(e1.model, e2.model);
    assert_eq!(e1.log, e2.log);
    let other = train_base(&data, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(other.model.geometry, b1.geometry);
}

#[test]
fn training_improves_fit_and_logs_both_stages() {
    let data = shells_data(24);
    let cfg = quick(120, 40);
    let (base, out) = train(&data, &cfg).unwrap();
    assert_eq!(base.stage(), Stage::Base);
    assert_eq!(out.model.stage(), Stage::Editable);
    let first = out.log.iter().find(|r| r.psnr.is_some()).unwrap();
    let last = out.log.iter().rev().find(|r| r.stage == Stage::Base && r.psnr.is_some()).unwrap();
    assert!(last.psnr.unwrap() > first.psnr.unwrap() + 1.0, "{first:?} -> {last:?}");
    assert!(out.log.iter().any(|r| r.densify.is_some()));
    let s2: Vec<_> = out.log.iter().filter(|r| r.stage == Stage::Editable).collect();
    assert_eq!(s2.last().unwrap().iteration, 40);
    assert!(s2.iter().all(|r| r.loss.total.is_finite()));
}

#[test]
fn editable_stage_keeps_geometry_and_freezes_palette() {
    let data = shells_data(24);
    let base = common::base_model(5, 60);
    let out = train_editable(&base, &data, &quick(0, 0)).unwrap();
    assert_eq!(out.model.geometry, base.geometry);
    assert_eq!(out.model.palette, data.palette());
    let Appearance::Shading { offset, terms } = &out.model.appearance else {
        panic!("expected shading attributes");
    };
    assert!(offset.iter().all(|o| *o == [0.0; 3]));
    let k = out.model.mapped_terms().unwrap();
    for t in &k {
        assert!((t[0] - 0.5).abs() < 1e-6 && (t[1] - 0.5).abs() < 1e-6 && (t[2] - 0.5).abs() < 1e-6);
        assert!((t[3] - 10.0).abs() < 1e-3);
    }
    assert_eq!(terms.len(), 60);

    let trained = train_editable(&base, &data, &quick(0, 30)).unwrap();
    assert_eq!(trained.model.palette, data.palette());
}

#[test]
fn palette_of_red_views_is_red() {
    let mut a = RgbaImage::new(4, 4);
    let mut b = RgbaImage::new(4, 4);
    for (i, p) in a.data.chunks_exact_mut(4).enumerate() {
        let alpha = (i as f32 + 1.0) / 16.0;
        p.copy_from_slice(&[alpha, 0.0, 0.0, alpha]);
    }
    b.data[0..4].copy_from_slice(&[0.3, 0.0, 0.0, 0.3]);
    let c = foreground_palette([&a, &b]);
    assert!((c[0] - 1.0).abs() < 1.0 / 255.0 && c[1].abs() < 1.0 / 255.0 && c[2].abs() < 1.0 / 255.0);
    assert_eq!(foreground_palette([&RgbaImage::new(2, 2)]), [0.5; 3]);
}

#[test]
fn zero_regularizers_leave_the_photometric_gradient() {
    let data = shells_data(24);
    let base = common::base_model(9, 80);
    let cfg = TrainConfig {
        weights: LossWeights {
            normal_consistency: 0.0,
            opacity_l1: 0.0,
            offset_sparsity: 0.0,
            bilateral_smoothness: 0.0,
            ..LossWeights::default()
        },
        ..quick(0, 10)
    };
    let trainer = Trainer::editable(&base, &data, &cfg).unwrap();
    let view = &data.views[2];
    let step = trainer.loss_and_grads(view, 0).unwrap();
    assert_eq!(step.loss.total, step.loss.photometric);

    // oracle: render shaded colors only and backpropagate the photometric loss
    let model = trainer.model();
    let scene = EffectiveScene::from_model(&model, data.light).unwrap();
    let cam = &view.camera;
    let cam_pos = cam.position.map(|v| v as f32);
    let feats: Vec<f32> = shade_all(&scene, cam_pos).unwrap().iter().flat_map(|s| s.rgb()).collect();
    let geom = SplatGeometry {
        mu: &scene.mu,
        rotation: &scene.rotation,
        scale: &scene.scale,
        opacity: &scene.opacity,
    };
    let settings = RenderSettings {
        mode: cfg.exec(),
        ..Default::default()
    };
    let (out, state) = render(&geom, &feats, 3, None, cam, &settings).unwrap();
    let npix = out.alpha.len();
    let pred: Vec<f32> = (0..npix).flat_map(|p| [out.features[3 * p], out.features[3 * p + 1], out.features[3 * p + 2], out.alpha[p]]).collect();
    let (loss, g) = photometric(&pred, &view.image.data, 24, 24, 0.8, 0.2).unwrap();
    assert!((loss as f64 - step.loss.photometric).abs() < 1e-6);
    let g_feat: Vec<f32> = (0..npix).flat_map(|p| [g[4 * p], g[4 * p + 1], g[4 * p + 2]]).collect();
    let g_alpha: Vec<f32> = (0..npix).map(|p| g[4 * p + 3]).collect();
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
    )
    .unwrap();
    let close = |a: f32, b: f32| (a - b).abs() <= 1e-5 + 1e-3 * b.abs();
    for i in 0..model.len() {
        let o = scene.opacity[i];
        assert!(close(step.grads.opacity[i][0], rg.opacity[i] * o * (1.0 - o)), "opacity {i}");
        for k in 0..3 {
            assert!(close(step.grads.log_scale[i][k], rg.scale[i][k] * scene.scale[i][k]), "scale {i}");
        }
    }

    let defaults = quick(0, 10);
    let regularized = Trainer::editable(&base, &data, &defaults).unwrap();
    let r = regularized.loss_and_grads(view, 0).unwrap();
    assert!(r.loss.total > r.loss.photometric);
    assert_ne!(r.grads.opacity, step.grads.opacity);
}

#[test]
fn bad_inputs_are_rejected() {
    let mut data = shells_data(16);
    let init = common::base_model(1, 10);
    assert!(matches!(
        train_base_from(&init, &data, &TrainConfig { init_count: 0, ..quick(1, 1) }),
        Err(TrainError::Config(_))
    ));
    let editable = common::editable_model(1, 10, [0.0; 3], [0.5; 3]);
    assert!(train_base_from(&editable, &data, &quick(1, 1)).is_err());
    assert!(train_editable(&editable, &data, &quick(1, 1)).is_err());
    data.views.truncate(1);
    assert!(matches!(train_base(&data, &quick(1, 1)), Err(TrainError::DatasetEmpty)));
}
