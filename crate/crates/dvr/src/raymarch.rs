//! Front-to-back ray marching with gradient normals and Blinn-Phong shading.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use volsplat_core::math::{dot, normalize, scale};
use volsplat_core::shading::{blinn_phong, resolve_light_direction, LightConfig};
use volsplat_core::{Camera, RgbaImage};

use crate::tf::TfSet;
use crate::volume::Volume;

/// Global lighting coefficients of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadingCoefficients {
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
}

impl Default for ShadingCoefficients {
    fn default() -> Self {
        ShadingCoefficients {
            ambient: 0.4,
            diffuse: 0.6,
            specular: 0.3,
            shininess: 20.0,
        }
    }
}

impl ShadingCoefficients {
    pub fn as_array(&self) -> [f64; 4] {
        [self.ambient, self.diffuse, self.specular, self.shininess]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarchSettings {
    /// World-space step; `None` means half the smallest voxel spacing.
    #[serde(default)]
    pub step: Option<f64>,
    pub shading: ShadingCoefficients,
    pub light: LightConfig,
}

impl Default for MarchSettings {
    fn default() -> Self {
        MarchSettings {
            step: None,
            shading: ShadingCoefficients::default(),
            light: LightConfig::headlight(),
        }
    }
}

const EARLY_EXIT_T: f64 = 1e-4;
const FLAT_GRADIENT: f64 = 1e-6;

/// Parametric interval where the ray overlaps the volume box.
fn clip_ray(origin: [f64; 3], dir: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut near, mut far) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
    }
    (t1 > t0).then_some((t0, t1))
}

/// Emitted color of one sample: Blinn-Phong with `I_a = I_d = c_v` and a
/// white specular light.
pub fn shade_sample(c_v: [f64; 3], n: [f64; 3], l: [f64; 3], v: [f64; 3], k: [f64; 4]) -> [f64; 3] {
    blinn_phong(c_v, n, l, v, k).rgb()
}

/// Premultiplied rgba of one ray.
pub fn march_ray(vol: &Volume, tfs: &TfSet, origin: [f64; 3], dir: [f64; 3], settings: &MarchSettings) -> [f64; 4] {
    let (lo, hi) = vol.bbox();
    let Some((t0, t1)) = clip_ray(origin, dir, lo, hi) else {
        return [0.0; 4];
    };
    let voxel = vol.min_spacing();
    let step = settings.step.unwrap_or(0.5 * voxel);
    let exponent = step / voxel;
    let k = settings.shading.as_array();
    let light = settings.light.light::<f64>();
    let view = scale(dir, -1.0);
    let mut rgb = [0.0; 3];
    let mut trans = 1.0;
    let n_steps = ((t1 - t0) / step).ceil() as usize;
    for i in 0..n_steps {
        let t = t0 + (i as f64 + 0.5) * step;
        if t > t1 {
            break;
        }
        let p = [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]];
        let v = vol.sample(p);
        let (c_v, a_ref) = tfs.lookup(v);
        if a_ref <= 0.0 {
            continue;
        }
        let alpha = 1.0 - (1.0 - a_ref).powf(exponent);
        let g = vol.gradient(p);
        let n = if dot(g, g).sqrt() < FLAT_GRADIENT { view } else { scale(normalize(g), -1.0) };
        let l = resolve_light_direction(&light, origin, p);
        let color = shade_sample(c_v, n, l, view, k);
        let w = trans * alpha;
        for c in 0..3 {
            rgb[c] += w * color[c];
        }
        trans *= 1.0 - alpha;
        if trans < EARLY_EXIT_T {
            break;
        }
    }
    [rgb[0], rgb[1], rgb[2], 1.0 - trans]
}

/// Premultiplied rgba through the center of pixel `(x, y)`.
pub fn raymarch_pixel(vol: &Volume, tfs: &TfSet, cam: &Camera, settings: &MarchSettings, x: u32, y: u32) -> [f64; 4] {
    let dir = cam.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
    march_ray(vol, tfs, cam.position, dir, settings)
}

/// Renders a full view; rows run in parallel and each pixel is independent,
/// so the result does not depend on the thread count.
pub fn render_view(vol: &Volume, tfs: &TfSet, cam: &Camera, settings: &MarchSettings) -> RgbaImage {
    let (w, h) = (cam.width, cam.height);
    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w as usize * 4);
            for x in 0..w {
                let px = raymarch_pixel(vol, tfs, cam, settings, x, y);
                // premultiplied color never exceeds alpha for colors in [0,1]
                let a = px[3].clamp(0.0, 1.0);
                row.extend(px[..3].iter().map(|&c| c.clamp(0.0, a) as f32));
                row.push(a as f32);
            }
            row
        })
        .collect();
    RgbaImage {
        width: w,
        height: h,
        data: rows.concat(),
    }
}
