//! Training objectives with analytic gradients with respect to the rendered
//! maps. Maps are pixel-major with interleaved channels.

use crate::camera::Camera;
use crate::error::{CoreError, Result};
use crate::math::{cross, mat_t_vec, normalize, sigmoid, sub, Real, Vec3};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Pixels with less accumulated alpha get no pseudo-normal.
pub const PSEUDO_NORMAL_MIN_ALPHA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub normal_consistency: f64,
    pub opacity_l1: f64,
    pub offset_sparsity: f64,
    pub bilateral_smoothness: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1: 0.8,
            ssim: 0.2,
            normal_consistency: 0.01,
            opacity_l1: 0.1,
            offset_sparsity: 0.01,
            bilateral_smoothness: 0.01,
        }
    }
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(CoreError::ShapeMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Mean absolute difference and its gradient with respect to `pred`.
pub fn l1<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    check_len(pred.len(), target.len(), "l1")?;
    if pred.is_empty() {
        return Ok((T::zero(), Vec::new()));
    }
    let inv = T::one() / T::lit(pred.len() as f64);
    let mut sum = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.abs();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((sum * inv, grad))
}

/// Normalized 1D Gaussian window.
pub fn gaussian_window<T: Real>() -> [T; SSIM_WINDOW] {
    let mut w = [T::zero(); SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    for (o, r) in w.iter_mut().zip(&raw) {
        *o = T::lit(r / total);
    }
    w
}

/// Separable Gaussian blur with zero padding, per channel.
fn blur<T: Real>(src: &[T], width: usize, height: usize, channels: usize, win: &[T; SSIM_WINDOW]) -> Vec<T> {
    let r = SSIM_WINDOW / 2;
    let mut tmp = vec![T::zero(); src.len()];
    for y in 0..height {
        for x in 0..width {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(width - 1);
            for c in 0..channels {
                let mut acc = T::zero();
                for xx in lo..=hi {
                    acc += win[xx + r - x] * src[(y * width + xx) * channels + c];
                }
                tmp[(y * width + x) * channels + c] = acc;
            }
        }
    }
    let mut out = vec![T::zero(); src.len()];
    for y in 0..height {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(height - 1);
        for x in 0..width {
            for c in 0..channels {
                let mut acc = T::zero();
                for yy in lo..=hi {
                    acc += win[yy + r - y] * tmp[(yy * width + x) * channels + c];
                }
                out[(y * width + x) * channels + c] = acc;
            }
        }
    }
    out
}

/// Mean SSIM over all pixels and channels, and its gradient with respect to `x`.
pub fn ssim<T: Real>(x: &[T], y: &[T], width: usize, height: usize, channels: usize) -> Result<(T, Vec<T>)> {
    check_len(x.len(), y.len(), "ssim")?;
    check_len(x.len(), width * height * channels, "ssim shape")?;
    if x.is_empty() {
        return Err(CoreError::EmptyInput("ssim image"));
    }
    let win = gaussian_window::<T>();
    let g = |v: &[T]| blur(v, width, height, channels, &win);
    let mu_x = g(x);
    let mu_y = g(y);
    let sq = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&p, &q)| p * q).collect::<Vec<T>>();
    let s_xx = g(&sq(x, x));
    let s_yy = g(&sq(y, y));
    let s_xy = g(&sq(x, y));

    let c1 = T::lit(SSIM_C1);
    let c2 = T::lit(SSIM_C2);
    let two = T::lit(2.0);
    let n = x.len();
    let inv = T::one() / T::lit(n as f64);
    let mut total = T::zero();
    let mut d_mu = vec![T::zero(); n];
    let mut d_sxx = vec![T::zero(); n];
    let mut d_sxy = vec![T::zero(); n];
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = s_xx[i] - mx * mx;
        let vy = s_yy[i] - my * my;
        let cxy = s_xy[i] - mx * my;
        let a1 = two * mx * my + c1;
        let a2 = two * cxy + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = vx + vy + c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        let den = b1 * b2;
        d_mu[i] = inv * ((two * my * a2 - two * my * a1) / den - s * (two * mx / b1 - two * mx / b2));
        d_sxx[i] = inv * (-s / b2);
        d_sxy[i] = inv * (two * a1 / den);
    }
    // the zero-padded symmetric blur is self-adjoint
    let gm = g(&d_mu);
    let gxx = g(&d_sxx);
    let gxy = g(&d_sxy);
    let grad = (0..n).map(|i| gm[i] + two * x[i] * gxx[i] + y[i] * gxy[i]).collect();
    Ok((total * inv, grad))
}

/// `l1_weight * L1 + ssim_weight * (1 - SSIM)` on 4-channel (rgb + alpha) stacks.
pub fn photometric<T: Real>(
    pred: &[T],
    target: &[T],
    width: usize,
    height: usize,
    l1_weight: T,
    ssim_weight: T,
) -> Result<(T, Vec<T>)> {
    let (l, gl) = l1(pred, target)?;
    let mut loss = l1_weight * l;
    let mut grad: Vec<T> = gl.into_iter().map(|v| v * l1_weight).collect();
    if ssim_weight != T::zero() {
        let (s, gs) = ssim(pred, target, width, height, 4)?;
        loss += ssim_weight * (T::one() - s);
        for (o, v) in grad.iter_mut().zip(gs) {
            *o -= ssim_weight * v;
        }
    }
    Ok((loss, grad))
}

/// Pseudo-normals from a rendered depth map under local planarity.
#[derive(Clone, Debug)]
pub struct PseudoNormals<T> {
    /// World-space unit normals oriented toward the camera, 3 per pixel.
    pub normals: Vec<T>,
    pub mask: Vec<bool>,
}

/// `depth` is the transmittance-weighted depth; the expected depth
/// `depth / alpha` is back-projected.
pub fn pseudo_normals<T: Real>(depth: &[T], alpha: &[T], cam: &Camera) -> Result<PseudoNormals<T>> {
    let (w, h) = (cam.width as usize, cam.height as usize);
    check_len(depth.len(), w * h, "depth map")?;
    check_len(alpha.len(), w * h, "alpha map")?;
    let f = cam.focal();
    let [cx, cy] = cam.principal_point();
    let min_alpha = T::lit(PSEUDO_NORMAL_MIN_ALPHA);
    let point = |x: usize, y: usize| -> Option<Vec3<f64>> {
        let i = y * w + x;
        if !(alpha[i] > min_alpha) {
            return None;
        }
        let z = (depth[i] / alpha[i]).as_f64();
        if !(z > 0.0) {
            return None;
        }
        Some([
            z * (x as f64 + 0.5 - cx) / f,
            z * (y as f64 + 0.5 - cy) / f,
            z,
        ])
    };
    let mut normals = vec![T::zero(); w * h * 3];
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let Some(p) = point(x, y) else { continue };
            let dx = match (x + 1 < w).then(|| point(x + 1, y)).flatten() {
                Some(q) => sub(q, p),
                None => match (x > 0).then(|| point(x - 1, y)).flatten() {
                    Some(q) => sub(p, q),
                    None => continue,
                },
            };
            let dy = match (y + 1 < h).then(|| point(x, y + 1)).flatten() {
                Some(q) => sub(q, p),
                None => match (y > 0).then(|| point(x, y - 1)).flatten() {
                    Some(q) => sub(p, q),
                    None => continue,
                },
            };
            let mut n = normalize(cross(dx, dy));
            if n == [0.0; 3] {
                continue;
            }
            // toward the camera at the origin
            if n[0] * p[0] + n[1] * p[1] + n[2] * p[2] > 0.0 {
                n = [-n[0], -n[1], -n[2]];
            }
            let nw = mat_t_vec(&cam.rotation, n);
            let i = y * w + x;
            for k in 0..3 {
                normals[3 * i + k] = T::lit(nw[k]);
            }
            mask[i] = true;
        }
    }
    Ok(PseudoNormals { normals, mask })
}

/// Mean over masked pixels of `|N - target|_2`; gradient with respect to `N`.
pub fn normal_consistency<T: Real>(rendered: &[T], target: &[T], mask: &[bool]) -> Result<(T, Vec<T>)> {
    check_len(rendered.len(), target.len(), "normal maps")?;
    check_len(rendered.len(), mask.len() * 3, "normal mask")?;
    let count = mask.iter().filter(|&&m| m).count();
    let mut grad = vec![T::zero(); rendered.len()];
    if count == 0 {
        return Ok((T::zero(), grad));
    }
    let inv = T::one() / T::lit(count as f64);
    let mut total = T::zero();
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let d = [
            rendered[3 * i] - target[3 * i],
            rendered[3 * i + 1] - target[3 * i + 1],
            rendered[3 * i + 2] - target[3 * i + 2],
        ];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        total += len;
        if len > T::zero() {
            for k in 0..3 {
                grad[3 * i + k] = inv * d[k] / len;
            }
        }
    }
    Ok((total * inv, grad))
}

/// Edge-aware smoothness of an attribute map (`channels` per pixel) guided
/// by a ground-truth rgb image. Differences past the last row/column are 0.
pub fn bilateral_smoothness<T: Real>(
    attr: &[T],
    channels: usize,
    guide_rgb: &[T],
    width: usize,
    height: usize,
    mask: Option<&[bool]>,
) -> Result<(T, Vec<T>)> {
    check_len(attr.len(), width * height * channels, "attribute map")?;
    check_len(guide_rgb.len(), width * height * 3, "guide image")?;
    if let Some(m) = mask {
        check_len(m.len(), width * height, "smoothness mask")?;
    }
    let included = |i: usize| mask.is_none_or(|m| m[i]);
    let count = (0..width * height).filter(|&i| included(i)).count();
    let mut grad = vec![T::zero(); attr.len()];
    if count == 0 {
        return Ok((T::zero(), grad));
    }
    let inv = T::one() / T::lit(count as f64);
    let mut total = T::zero();
    let sgn = |v: T| {
        if v > T::zero() {
            T::one()
        } else if v < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    };
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !included(i) {
                continue;
            }
            let right = (x + 1 < width).then_some(i + 1);
            let down = (y + 1 < height).then_some(i + width);
            let mut edge = T::zero();
            for j in [right, down].into_iter().flatten() {
                for c in 0..3 {
                    edge += (guide_rgb[3 * j + c] - guide_rgb[3 * i + c]).abs();
                }
            }
            let wgt = (-edge).exp();
            for j in [right, down].into_iter().flatten() {
                for k in 0..channels {
                    let d = attr[channels * j + k] - attr[channels * i + k];
                    total += wgt * d.abs();
                    let g = inv * wgt * sgn(d);
                    grad[channels * j + k] += g;
                    grad[channels * i + k] -= g;
                }
            }
        }
    }
    Ok((total * inv, grad))
}

/// Mean absolute value over all entries of a map.
pub fn sparsity<T: Real>(map: &[T]) -> (T, Vec<T>) {
    if map.is_empty() {
        return (T::zero(), Vec::new());
    }
    let zeros = vec![T::zero(); map.len()];
    l1(map, &zeros).expect("equal lengths")
}

/// Mean sigmoid-mapped opacity; gradient with respect to the stored logits.
pub fn opacity_regularizer<T: Real>(logits: &[T]) -> (T, Vec<T>) {
    if logits.is_empty() {
        return (T::zero(), Vec::new());
    }
    let inv = T::one() / T::lit(logits.len() as f64);
    let mut total = T::zero();
    let grad = logits
        .iter()
        .map(|&o| {
            let s = sigmoid(o);
            total += s;
            inv * s * (T::one() - s)
        })
        .collect();
    (total * inv, grad)
}
