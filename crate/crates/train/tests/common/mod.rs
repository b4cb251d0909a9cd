#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volsplat_core::shading::LightConfig;
use volsplat_core::{Camera, RgbaImage};
use volsplat_dvr::dataset::render_dataset;
use volsplat_dvr::fixtures::{inner_tf, march_settings, shells_spec, shells_volume, CAMERA_FOV_Y, CAMERA_RADIUS};
use volsplat_dvr::views::icosphere_cameras;
use volsplat_dvr::TfSet;
use volsplat_scene::{Appearance, BasicSceneModel, Geometry, ModelMeta};
use volsplat_train::{TrainData, View};

/// Inner shell of the test volume seen by the 12 icosahedron vertices.
pub fn shells_data(res: u32) -> TrainData {
    let vol = shells_volume(32);
    let cams = icosphere_cameras(0, CAMERA_RADIUS, [0.0; 3], CAMERA_FOV_Y, res, res);
    let ds = render_dataset(
        &vol,
        shells_spec(32),
        &TfSet::single(inner_tf()),
        cams,
        &march_settings(LightConfig::headlight()),
    )
    .unwrap();
    TrainData::from_dataset(&ds)
}

/// Two views of a uniform premultiplied image.
pub fn flat_data(res: u32, rgba: [f32; 4]) -> TrainData {
    let mut image = RgbaImage::new(res, res);
    for p in image.data.chunks_exact_mut(4) {
        p.copy_from_slice(&rgba);
    }
    let views = [0.0, 0.05]
        .iter()
        .map(|&az| View {
            camera: Camera::orbit([0.0; 3], 4.0, 0.0, az, 0.6, res, res),
            image: image.clone(),
        })
        .collect();
    TrainData {
        views,
        eval: Vec::new(),
        bbox: [[-1.0; 3], [1.0; 3]],
        light: LightConfig::headlight(),
        name: "flat".into(),
        tf: serde_json::Value::Null,
    }
}

pub fn splat_geometry(r: &mut ChaCha8Rng, n: usize, center: [f32; 3]) -> Geometry {
    let mut g = Geometry::default();
    for _ in 0..n {
        g.mu.push(std::array::from_fn(|a| center[a] + r.random_range(-0.6..0.6)));
        let q: [f32; 4] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        g.rotation.push(q);
        g.log_scale.push(std::array::from_fn(|_| r.random_range(0.05f32..0.2).ln()));
        g.opacity_logit.push(r.random_range(-1.0..3.0));
        let v: [f32; 3] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-3);
        g.normal.push(v.map(|x| x / len));
    }
    g
}

pub fn editable_model(seed: u64, n: usize, center: [f32; 3], palette: [f32; 3]) -> BasicSceneModel {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let geometry = splat_geometry(&mut r, n, center);
    let offset = (0..n).map(|_| std::array::from_fn(|_| r.random_range(-0.05..0.05))).collect();
    let terms = (0..n)
        .map(|_| [r.random_range(0.0..1.5), r.random_range(-0.5..1.0), r.random_range(-2.0..0.0), r.random_range(1.0..3.0)])
        .collect();
    BasicSceneModel {
        geometry,
        appearance: Appearance::Shading { offset, terms },
        palette,
        meta: ModelMeta {
            name: format!("scene-{seed}"),
            light: Some(LightConfig::headlight()),
            ..ModelMeta::default()
        },
    }
}

pub fn base_model(seed: u64, n: usize) -> BasicSceneModel {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let geometry = splat_geometry(&mut r, n, [0.0; 3]);
    let coeffs = (0..n).map(|_| std::array::from_fn(|_| r.random_range(-0.5..0.5))).collect();
    BasicSceneModel {
        geometry,
        appearance: Appearance::Sh { degree: 0, coeffs },
        palette: [0.5; 3],
        meta: ModelMeta::default(),
    }
}

pub fn camera(w: u32) -> Camera {
    Camera::orbit([0.0; 3], 3.0, 0.35, 0.8, 0.8, w, w)
}
