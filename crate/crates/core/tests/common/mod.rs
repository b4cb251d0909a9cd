#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volsplat_core::raster::{ScreenSplat, ALPHA_MAX, ALPHA_MIN, TRANSMITTANCE_MIN};
use volsplat_core::Camera;

/// Brute-force compositor: every pixel sorts all splats by depth and
/// composites front to back. Shares nothing with the tiled rasterizer.
pub fn naive_composite(
    splats: &[ScreenSplat<f64>],
    features: &[f64],
    channels: usize,
    width: u32,
    height: u32,
) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..splats.len()).filter(|&i| splats[i].visible).collect();
    order.sort_by(|&a, &b| splats[a].depth.total_cmp(&splats[b].depth).then(a.cmp(&b)));
    let mut color = vec![0.0; (width * height) as usize * channels];
    let mut alpha = vec![0.0; (width * height) as usize];
    for y in 0..height {
        for x in 0..width {
            let p = (y * width + x) as usize;
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            for &i in &order {
                let s = &splats[i];
                let dx = px - s.mean[0];
                let dy = py - s.mean[1];
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if q < 0.0 {
                    continue;
                }
                let a = (s.opacity * (-0.5 * q).exp()).min(ALPHA_MAX);
                if a < ALPHA_MIN {
                    continue;
                }
                if t * (1.0 - a) < TRANSMITTANCE_MIN {
                    break;
                }
                for c in 0..channels {
                    color[p * channels + c] += t * a * features[i * channels + c];
                }
                t *= 1.0 - a;
            }
            alpha[p] = 1.0 - t;
        }
    }
    (color, alpha)
}

/// Random screen-space scene with footprints of a few pixels up to a third
/// of the image.
pub fn random_screen_scene(
    rng: &mut ChaCha8Rng,
    n: usize,
    width: u32,
    height: u32,
    channels: usize,
) -> (Vec<ScreenSplat<f64>>, Vec<f64>) {
    let mut splats = Vec::with_capacity(n);
    for _ in 0..n {
        let sx: f64 = rng.random_range(0.7..width as f64 / 6.0);
        let sy: f64 = rng.random_range(0.7..height as f64 / 6.0);
        let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (s, c) = th.sin_cos();
        let a = c * c * sx * sx + s * s * sy * sy;
        let b = c * s * (sx * sx - sy * sy);
        let d = s * s * sx * sx + c * c * sy * sy;
        let det = a * d - b * b;
        splats.push(ScreenSplat {
            mean: [
                rng.random_range(-4.0..width as f64 + 4.0),
                rng.random_range(-4.0..height as f64 + 4.0),
            ],
            cov: [a, b, d],
            conic: [d / det, -b / det, a / det],
            opacity: rng.random_range(0.02..1.0),
            depth: rng.random_range(0.5..10.0),
            visible: rng.random_range(0.0..1.0) > 0.05,
        });
    }
    let features = (0..n * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    (splats, features)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random 3D splats in front of a camera looking at the origin.
pub struct Scene3 {
    pub mu: Vec<[f64; 3]>,
    pub rotation: Vec<[f64; 4]>,
    pub scale: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
    pub normals: Vec<[f64; 3]>,
    pub features: Vec<f64>,
    pub cam: Camera,
}

pub fn random_scene3(rng: &mut ChaCha8Rng, n: usize, size: u32, channels: usize) -> Scene3 {
    let polar = rng.random_range(-1.0..1.0);
    let azimuth = rng.random_range(-3.0..3.0);
    let cam = Camera::orbit([0.0; 3], 4.0, polar, azimuth, 0.6, size, size);
    let mut s = Scene3 {
        mu: Vec::new(),
        rotation: Vec::new(),
        scale: Vec::new(),
        opacity: Vec::new(),
        normals: Vec::new(),
        features: Vec::new(),
        cam,
    };
    for _ in 0..n {
        s.mu.push([0; 3].map(|_| rng.random_range(-0.6..0.6)));
        s.rotation.push([0; 4].map(|_| rng.random_range(-1.0..1.0)));
        s.scale.push([0; 3].map(|_| rng.random_range(0.08..0.35)));
        s.opacity.push(rng.random_range(0.2..0.8));
        s.normals.push([0; 3].map(|_| rng.random_range(-1.0..1.0)));
    }
    s.features = (0..n * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    s
}
