//! Image-quality metrics: PSNR, SSIM and CIE L*u*v* difference maps.

use crate::error::{CoreError, Result};
use crate::image::RgbaImage;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Distance (in L*u*v* units) mapped to the top of the heatmap ramp.
pub const LUV_HEATMAP_MAX: f64 = 50.0;

/// PSNR over the rgb channels of two images with values in `[0,1]`.
pub fn psnr(a: &RgbaImage, b: &RgbaImage) -> Result<f64> {
    a.same_shape(b)?;
    psnr_rgb(&a.rgb(), &b.rgb())
}

pub fn psnr_rgb(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::ShapeMismatch(format!("psnr: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(CoreError::EmptyInput("psnr image"));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean SSIM over the rgba stack.
pub fn ssim(a: &RgbaImage, b: &RgbaImage) -> Result<f64> {
    a.same_shape(b)?;
    let x: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    Ok(crate::losses::ssim(&x, &y, a.width as usize, a.height as usize, 4)?.0)
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

/// sRGB (`[0,1]`) to CIE L*u*v* under D65.
pub fn srgb_to_luv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| srgb_to_linear(c.clamp(0.0, 1.0)));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175 * b;
    let z = 0.019_333_9 * r + 0.119_192 * g + 0.950_304_1 * b;
    let yr = y / WHITE_D65[1];
    let eps = 216.0 / 24389.0;
    let kappa = 24389.0 / 27.0;
    let l = if yr > eps { 116.0 * yr.cbrt() - 16.0 } else { kappa * yr };
    let uv = |x: f64, y: f64, z: f64| {
        let d = x + 15.0 * y + 3.0 * z;
        if d == 0.0 {
            (0.0, 0.0)
        } else {
            (4.0 * x / d, 9.0 * y / d)
        }
    };
    let (up, vp) = uv(x, y, z);
    let (un, vn) = uv(WHITE_D65[0], WHITE_D65[1], WHITE_D65[2]);
    if l == 0.0 {
        return [0.0, 0.0, 0.0];
    }
    [l, 13.0 * l * (up - un), 13.0 * l * (vp - vn)]
}

pub fn luv_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let p = srgb_to_luv(a);
    let q = srgb_to_luv(b);
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

/// Per-pixel L*u*v* distance between the rgb channels of two images.
pub fn luv_distance_map(a: &RgbaImage, b: &RgbaImage) -> Result<Vec<f64>> {
    a.same_shape(b)?;
    Ok(a.data
        .chunks_exact(4)
        .zip(b.data.chunks_exact(4))
        .map(|(p, q)| {
            let c = |v: &[f32]| [v[0] as f64, v[1] as f64, v[2] as f64];
            luv_distance(c(p), c(q))
        })
        .collect())
}

/// Purple (low) to green (medium) to red (high) ramp over `[0, 1]`.
pub fn heat_color(t: f64) -> [f64; 3] {
    const PURPLE: [f64; 3] = [0.35, 0.0, 0.55];
    const GREEN: [f64; 3] = [0.0, 0.75, 0.2];
    const RED: [f64; 3] = [0.9, 0.0, 0.0];
    let t = t.clamp(0.0, 1.0);
    let (a, b, s) = if t < 0.5 { (PURPLE, GREEN, t * 2.0) } else { (GREEN, RED, t * 2.0 - 1.0) };
    [0, 1, 2].map(|k| a[k] + (b[k] - a[k]) * s)
}

/// Heatmap of the L*u*v* difference, opaque.
pub fn luv_difference_image(a: &RgbaImage, b: &RgbaImage) -> Result<(RgbaImage, Vec<f64>)> {
    let dist = luv_distance_map(a, b)?;
    let mut img = RgbaImage::new(a.width, a.height);
    for (px, d) in img.data.chunks_exact_mut(4).zip(&dist) {
        let c = heat_color(d / LUV_HEATMAP_MAX);
        px.copy_from_slice(&[c[0] as f32, c[1] as f32, c[2] as f32, 1.0]);
    }
    Ok((img, dist))
}
