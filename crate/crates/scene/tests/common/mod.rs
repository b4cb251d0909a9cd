#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volsplat_core::Camera;
use volsplat_scene::{Appearance, BasicSceneModel, Geometry, ModelMeta};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit(rng: &mut ChaCha8Rng) -> [f32; 3] {
    loop {
        let v: [f32; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

pub fn random_geometry(rng: &mut ChaCha8Rng, n: usize, center: [f32; 3]) -> Geometry {
    let mut g = Geometry::default();
    for _ in 0..n {
        g.mu.push(std::array::from_fn(|a| center[a] + rng.random_range(-0.6..0.6)));
        let q: [f32; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        g.rotation.push(q);
        g.log_scale.push(std::array::from_fn(|_| rng.random_range(0.03f32..0.15).ln()));
        g.opacity_logit.push(rng.random_range(-2.0..3.0));
        g.normal.push(unit(rng));
    }
    g
}

pub fn random_editable(seed: u64, n: usize, center: [f32; 3]) -> BasicSceneModel {
    let mut r = rng(seed);
    let geometry = random_geometry(&mut r, n, center);
    let offset = (0..n).map(|_| std::array::from_fn(|_| r.random_range(-0.1..0.1))).collect();
    let terms = (0..n)
        .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-2.0..0.5), r.random_range(1.0..3.0)])
        .collect();
    BasicSceneModel {
        geometry,
        appearance: Appearance::Shading { offset, terms },
        palette: [r.random_range(0.2..0.9), r.random_range(0.2..0.9), r.random_range(0.2..0.9)],
        meta: ModelMeta {
            name: format!("random-{seed}"),
            ..ModelMeta::default()
        },
    }
}

pub fn random_base(seed: u64, n: usize, degree: usize) -> BasicSceneModel {
    let mut r = rng(seed);
    let geometry = random_geometry(&mut r, n, [0.0; 3]);
    let k = (degree + 1) * (degree + 1);
    let coeffs = (0..n * k).map(|_| std::array::from_fn(|_| r.random_range(-0.5..0.5))).collect();
    BasicSceneModel {
        geometry,
        appearance: Appearance::Sh { degree, coeffs },
        palette: [0.5; 3],
        meta: ModelMeta::default(),
    }
}

pub fn camera(w: u32) -> Camera {
    Camera::orbit([0.0; 3], 3.0, 0.35, 0.8, 0.8, w, w)
}

pub fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}
