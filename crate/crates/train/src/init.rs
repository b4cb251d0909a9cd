//! Stage-1 initialization without structure-from-motion points: uniform
//! samples in the bounding box.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use volsplat_core::math::{logit, normalize};
use volsplat_core::sh::{coeff_count, dc_from_rgb};
use volsplat_core::{Camera, RgbaImage};
use volsplat_scene::{Appearance, BasicSceneModel, Geometry};

use crate::config::TrainConfig;
use crate::data::TrainData;

/// Alpha below which a pixel counts as background for carving and color lookup.
const MASK_ALPHA: f32 = 0.5 / 255.0;

/// Pixel containing world point `p`, if it is in front of the camera and in frame.
pub fn pixel_of(cam: &Camera, p: [f64; 3]) -> Option<(u32, u32)> {
    let t = cam.world_to_camera(p);
    if t[2] <= volsplat_core::camera::NEAR_PLANE {
        return None;
    }
    let f = cam.focal();
    let [cx, cy] = cam.principal_point();
    let x = f * t[0] / t[2] + cx;
    let y = f * t[1] / t[2] + cy;
    if x < 0.0 || y < 0.0 || x >= cam.width as f64 || y >= cam.height as f64 {
        return None;
    }
    Some((x as u32, y as u32))
}

fn inside_silhouettes(data: &TrainData, p: [f64; 3]) -> bool {
    data.views.iter().all(|v| match pixel_of(&v.camera, p) {
        Some((x, y)) => v.image.pixel(x, y)[3] > MASK_ALPHA,
        None => true,
    })
}

/// Straight color seen at `p` by `cam`, if the pixel is not background.
fn seen_color(cam: &Camera, img: &RgbaImage, p: [f64; 3]) -> Option<[f64; 3]> {
    let (x, y) = pixel_of(cam, p)?;
    let px = img.pixel(x, y);
    (px[3] > MASK_ALPHA).then(|| [0, 1, 2].map(|c| (px[c] / px[3]).clamp(0.0, 1.0) as f64))
}

/// Mean distance to the three nearest other points (brute force).
fn mean_knn_distance(points: &[[f64; 3]], k: usize) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = vec![f64::INFINITY; k];
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>();
                if d < best[k - 1] {
                    best[k - 1] = d;
                    best.sort_by(f64::total_cmp);
                }
            }
            let found: Vec<f64> = best.into_iter().filter(|d| d.is_finite()).collect();
            if found.is_empty() {
                f64::NAN
            } else {
                found.iter().map(|d| d.sqrt()).sum::<f64>() / found.len() as f64
            }
        })
        .collect()
}

/// Base-stage model with `cfg.init_count` primitives.
pub fn initialize(data: &TrainData, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> BasicSceneModel {
    let [lo, hi] = data.bbox;
    let mut points = Vec::with_capacity(cfg.init_count);
    let max_attempts = 100 * cfg.init_count;
    let mut attempts = 0;
    while points.len() < cfg.init_count {
        let p = [0, 1, 2].map(|a| lo[a] + (hi[a] - lo[a]) * rng.random::<f64>());
        attempts += 1;
        // carving gives up after too many rejections rather than looping forever
        if !cfg.silhouette_carving || attempts > max_attempts || inside_silhouettes(data, p) {
            points.push(p);
        }
    }

    let knn = mean_knn_distance(&points, 3);
    let fallback = data.extent() / (points.len() as f64).cbrt();
    let k = coeff_count(cfg.sh_degree);
    let first = &data.views[0];
    let mut geometry = Geometry::default();
    let mut coeffs = Vec::with_capacity(points.len() * k);
    for (p, d) in points.iter().zip(knn) {
        let d = if d.is_finite() && d > 0.0 { d } else { fallback };
        geometry.mu.push(p.map(|v| v as f32));
        geometry.rotation.push([1.0, 0.0, 0.0, 0.0]);
        geometry.log_scale.push([d.ln() as f32; 3]);
        geometry.opacity_logit.push(logit(cfg.init_opacity) as f32);
        let n: [f64; 3] = [0; 3].map(|_| StandardNormal.sample(rng));
        geometry.normal.push(normalize(n).map(|v| v as f32));
        let rgb = seen_color(&first.camera, &first.image, *p).unwrap_or([0.5; 3]);
        coeffs.push(rgb.map(|c| dc_from_rgb(c) as f32));
        coeffs.extend(std::iter::repeat_n([0.0f32; 3], k - 1));
    }
    BasicSceneModel {
        geometry,
        appearance: Appearance::Sh {
            degree: cfg.sh_degree,
            coeffs,
        },
        palette: [0.5; 3],
        meta: data.meta(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_on_a_line() {
        let pts: Vec<[f64; 3]> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
        let d = mean_knn_distance(&pts, 3);
        // point 0: neighbors at 1, 2, 3
        assert!((d[0] - 2.0).abs() < 1e-12);
        // point 2: neighbors at distance 1, 1, 2
        assert!((d[2] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn center_projects_to_principal_point() {
        let cam = Camera::look_at([0.0, 0.0, 4.0], [0.0; 3], [0.0, 1.0, 0.0], 0.6, 32, 32);
        assert_eq!(pixel_of(&cam, [0.0; 3]), Some((16, 16)));
        assert_eq!(pixel_of(&cam, [0.0, 0.0, 8.0]), None);
    }
}
