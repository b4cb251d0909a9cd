//! Camera rigs (icosphere, icosphere + Fibonacci) and entropy-driven view
//! counts.

use std::collections::HashMap;

use volsplat_core::math::{dot, normalize};
use volsplat_core::{Camera, RgbaImage};

use crate::error::{DvrError, Result};

/// Unit vertices of an icosahedron subdivided `level` times (`10 * 4^level + 2`).
pub fn icosphere(level: u32) -> Vec<[f64; 3]> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| normalize(v))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

/// `n` roughly uniform unit directions on a Fibonacci lattice; `offset`
/// rotates the lattice about the z axis.
pub fn fibonacci_sphere(n: usize, offset: f64) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64 + offset;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Direction set for a supported view count: 12, 42, 162 (icosphere levels
/// 0-2), or 92 (42 icosphere vertices plus 50 Fibonacci directions).
pub fn rig_directions(count: usize) -> Result<Vec<[f64; 3]>> {
    match count {
        12 => Ok(icosphere(0)),
        42 => Ok(icosphere(1)),
        162 => Ok(icosphere(2)),
        92 => {
            let mut dirs = icosphere(1);
            for d in fibonacci_sphere(50, 0.0) {
                // angular distance > 1e-6 to every existing direction
                if dirs.iter().all(|e| dot(*e, d) < (1e-6f64).cos()) {
                    dirs.push(d);
                }
            }
            Ok(dirs)
        }
        n => {
            let levels: Vec<usize> = (0..6).map(|l| 10 * 4usize.pow(l) + 2).collect();
            match levels.iter().position(|&c| c == n) {
                Some(l) => Ok(icosphere(l as u32)),
                None => Err(DvrError::Dataset(format!("no rig with {n} views"))),
            }
        }
    }
}

/// Cameras at `center + radius * dir` looking at `center` (up = +z).
pub fn cameras_for(dirs: &[[f64; 3]], radius: f64, center: [f64; 3], fov_y: f64, width: u32, height: u32) -> Vec<Camera> {
    dirs.iter()
        .enumerate()
        .map(|(i, d)| {
            let pos = [0, 1, 2].map(|a| center[a] + radius * d[a]);
            Camera::look_at(pos, center, [0.0, 0.0, 1.0], fov_y, width, height).with_file(format!("view_{i:04}.png"))
        })
        .collect()
}

pub fn icosphere_cameras(level: u32, radius: f64, center: [f64; 3], fov_y: f64, width: u32, height: u32) -> Vec<Camera> {
    cameras_for(&icosphere(level), radius, center, fov_y, width, height)
}

/// Evaluation cameras on a Fibonacci lattice offset from the training rigs.
pub fn held_out_cameras(n: usize, radius: f64, center: [f64; 3], fov_y: f64, width: u32, height: u32) -> Vec<Camera> {
    let dirs = fibonacci_sphere(n, 0.37);
    cameras_for(&dirs, radius, center, fov_y, width, height)
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.with_file(format!("heldout_{i:04}.png")))
        .collect()
}

/// Rec. 709 luma of premultiplied rgb.
fn luminance(p: [f32; 4]) -> f32 {
    0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]
}

fn bin(v: f32) -> usize {
    (v.clamp(0.0, 1.0) * 255.0).round() as usize
}

/// `E = -sum over pixels (p_c ln p_c + p_a ln p_a)` where `p_c` (`p_a`) is the
/// relative frequency of the pixel's 256-bin luminance (alpha) bin across
/// all pixels of all images.
pub fn entropy_score(images: &[RgbaImage]) -> Result<f64> {
    let total: usize = images.iter().map(RgbaImage::pixel_count).sum();
    if total == 0 {
        return Err(DvrError::EmptyInput("entropy images"));
    }
    let mut hist_c = [0usize; 256];
    let mut hist_a = [0usize; 256];
    for img in images {
        for p in img.data.chunks_exact(4) {
            hist_c[bin(luminance([p[0], p[1], p[2], p[3]]))] += 1;
            hist_a[bin(p[3])] += 1;
        }
    }
    let n = total as f64;
    // each pixel in bin b contributes -p_b ln p_b, so sum count_b * (-p_b ln p_b)
    let term = |h: &[usize; 256]| -> f64 {
        h.iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -(c as f64) * p * p.ln()
            })
            .sum()
    };
    Ok(term(&hist_c) + term(&hist_a))
}

/// Scores divided by their maximum (all zero when the maximum is zero).
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(0.0, f64::max);
    raw.iter().map(|&e| if max > 0.0 { e / max } else { 0.0 }).collect()
}

/// `[0, 0.1) -> 42`, `[0.1, 0.5] -> 92`, `(0.5, 1] -> 162`.
pub fn views_for_scene(score: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&score) {
        return Err(DvrError::OutOfRange(score));
    }
    Ok(if score < 0.1 {
        42
    } else if score <= 0.5 {
        92
    } else {
        162
    })
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EntropyReport {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub views: Vec<usize>,
}

/// Scores each scene's probe images and assigns view counts.
pub fn entropy_report(probes: &[Vec<RgbaImage>]) -> Result<EntropyReport> {
    let raw = probes.iter().map(|imgs| entropy_score(imgs)).collect::<Result<Vec<_>>>()?;
    let normalized = normalize_scores(&raw);
    let views = normalized.iter().map(|&s| views_for_scene(s)).collect::<Result<Vec<_>>>()?;
    Ok(EntropyReport { raw, normalized, views })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        assert_eq!(icosphere(0).len(), 12);
        assert_eq!(icosphere(1).len(), 42);
        assert_eq!(icosphere(2).len(), 162);
        assert_eq!(icosphere(3).len(), 642);
    }

    #[test]
    fn rig_92() {
        let d = rig_directions(92).unwrap();
        assert_eq!(d.len(), 92);
        assert!(rig_directions(50).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(views_for_scene(0.05).unwrap(), 42);
        assert_eq!(views_for_scene(0.1).unwrap(), 92);
        assert_eq!(views_for_scene(0.5).unwrap(), 92);
        assert_eq!(views_for_scene(0.8).unwrap(), 162);
        assert!(matches!(views_for_scene(1.2), Err(DvrError::OutOfRange(_))));
        assert!(views_for_scene(f64::NAN).is_err());
    }
}
