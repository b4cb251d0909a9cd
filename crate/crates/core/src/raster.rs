//! Tile-based front-to-back compositing of screen-space Gaussians and its
//! exact backward pass.
//!
//! Every splat carries a feature vector of `channels` values (color, depth,
//! normal, shading attributes, ...). All channels share the same `T_i a_i`
//! weights, so attribute maps are consistent with the color map by
//! construction.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::math::Real;

pub const TILE_SIZE: u32 = 16;
/// Upper clamp on per-splat alpha.
pub const ALPHA_MAX: f64 = 0.99;
/// Contributions below this alpha are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Compositing stops before transmittance would fall below this value.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    #[default]
    Parallel,
    /// Single-threaded execution on the calling thread.
    Sequential,
}

/// A projected splat as seen by the rasterizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScreenSplat<T> {
    pub mean: [T; 2],
    pub cov: [T; 3],
    pub conic: [T; 3],
    pub opacity: T,
    pub depth: T,
    pub visible: bool,
}

impl<T: Real> ScreenSplat<T> {
    pub fn hidden() -> Self {
        ScreenSplat {
            mean: [T::zero(); 2],
            cov: [T::one(), T::zero(), T::one()],
            conic: [T::one(), T::zero(), T::one()],
            opacity: T::zero(),
            depth: T::zero(),
            visible: false,
        }
    }

    /// Pixel radius outside of which `opacity * G < 1/255` is guaranteed.
    fn extent(&self) -> Option<T> {
        let o255 = self.opacity * T::lit(255.0);
        if !(o255 > T::one()) {
            return None;
        }
        let mid = T::lit(0.5) * (self.cov[0] + self.cov[2]);
        let det = self.cov[0] * self.cov[2] - self.cov[1] * self.cov[1];
        let lambda = mid + (mid * mid - det).max(T::lit(0.1)).sqrt();
        let k = (T::lit(2.0) * o255.ln()).sqrt();
        Some((k * lambda.sqrt()).ceil())
    }
}

/// Per-tile splat lists sorted front to back.
#[derive(Clone, Debug)]
pub struct TileBins {
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub lists: Vec<Vec<u32>>,
}

pub fn bin_splats<T: Real>(splats: &[ScreenSplat<T>], width: u32, height: u32) -> TileBins {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    let ts = T::lit(TILE_SIZE as f64);
    for (i, s) in splats.iter().enumerate() {
        if !s.visible {
            continue;
        }
        let Some(r) = s.extent() else { continue };
        let x0 = ((s.mean[0] - r) / ts).floor();
        let x1 = ((s.mean[0] + r) / ts).floor();
        let y0 = ((s.mean[1] - r) / ts).floor();
        let y1 = ((s.mean[1] + r) / ts).floor();
        if x1 < T::zero() || y1 < T::zero() {
            continue;
        }
        let clamp = |v: T, hi: u32| -> i64 {
            let v = v.to_i64().unwrap_or(i64::MIN);
            v.clamp(0, hi as i64 - 1)
        };
        if x0.as_f64() >= tiles_x as f64 || y0.as_f64() >= tiles_y as f64 {
            continue;
        }
        let (x0, x1) = (clamp(x0, tiles_x), clamp(x1, tiles_x));
        let (y0, y1) = (clamp(y0, tiles_y), clamp(y1, tiles_y));
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                lists[(ty as u32 * tiles_x + tx as u32) as usize].push(i as u32);
            }
        }
    }
    for list in &mut lists {
        list.sort_unstable_by(|&a, &b| {
            splats[a as usize]
                .depth
                .partial_cmp(&splats[b as usize].depth)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
    }
    TileBins {
        tiles_x,
        tiles_y,
        lists,
    }
}

/// Output maps of one forward pass.
#[derive(Clone, Debug)]
pub struct RasterOutput<T> {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    /// `height * width * channels`, pixel-major.
    pub features: Vec<T>,
    pub alpha: Vec<T>,
    pub final_transmittance: Vec<T>,
    /// Number of tile-list entries walked by each pixel (backward replay bound).
    pub last_entry: Vec<u32>,
    /// Number of splats that actually contributed to each pixel.
    pub contrib_count: Vec<u32>,
}

/// Gradients with respect to the rasterizer inputs.
#[derive(Clone, Debug)]
pub struct RasterGrads<T> {
    pub mean: Vec<[T; 2]>,
    pub conic: Vec<[T; 3]>,
    pub opacity: Vec<T>,
    /// `n * channels`.
    pub features: Vec<T>,
}

impl<T: Real> RasterGrads<T> {
    pub fn zeros(n: usize, channels: usize) -> Self {
        RasterGrads {
            mean: vec![[T::zero(); 2]; n],
            conic: vec![[T::zero(); 3]; n],
            opacity: vec![T::zero(); n],
            features: vec![T::zero(); n * channels],
        }
    }
}

/// Splat data gathered contiguously for one tile.
struct TileSplat<T> {
    mean: [T; 2],
    conic: [T; 3],
    opacity: T,
    /// `power` below this value cannot reach `ALPHA_MIN`.
    power_cut: T,
}

fn gather_tile<T: Real>(list: &[u32], splats: &[ScreenSplat<T>]) -> Vec<TileSplat<T>> {
    list.iter()
        .map(|&i| {
            let s = &splats[i as usize];
            let cut = -(s.opacity * T::lit(255.0)).ln();
            TileSplat {
                mean: s.mean,
                conic: s.conic,
                opacity: s.opacity,
                // small safety margin; the exact alpha test decides
                power_cut: cut - T::lit(1e-3) * (T::one() + cut.abs()),
            }
        })
        .collect()
}

#[inline]
fn splat_power<T: Real>(s: &TileSplat<T>, px: T, py: T) -> (T, T, T) {
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    let power =
        -T::lit(0.5) * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
    (power, dx, dy)
}

fn tile_pixels(tile: usize, bins: &TileBins, width: u32, height: u32) -> (u32, u32, u32, u32) {
    let tx = tile as u32 % bins.tiles_x;
    let ty = tile as u32 / bins.tiles_x;
    let x0 = tx * TILE_SIZE;
    let y0 = ty * TILE_SIZE;
    (x0, y0, (x0 + TILE_SIZE).min(width), (y0 + TILE_SIZE).min(height))
}

fn run_tiles<R: Send, F: Fn(usize) -> R + Sync + Send>(mode: ExecMode, n: usize, f: F) -> Vec<R> {
    match mode {
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
        ExecMode::Sequential => (0..n).map(f).collect(),
    }
}

struct TileForward<T> {
    features: Vec<T>,
    final_t: Vec<T>,
    last: Vec<u32>,
    count: Vec<u32>,
}

/// Composites `splats` (with `features`, `channels` per splat) front to back.
pub fn rasterize_forward<T: Real>(
    splats: &[ScreenSplat<T>],
    features: &[T],
    channels: usize,
    bins: &TileBins,
    width: u32,
    height: u32,
    mode: ExecMode,
) -> RasterOutput<T> {
    assert_eq!(features.len(), splats.len() * channels);
    let n_tiles = bins.lists.len();
    let alpha_max = T::lit(ALPHA_MAX);
    let alpha_min = T::lit(ALPHA_MIN);
    let t_min = T::lit(TRANSMITTANCE_MIN);

    let tiles = run_tiles(mode, n_tiles, |tile| {
        let (x0, y0, x1, y1) = tile_pixels(tile, bins, width, height);
        let list = &bins.lists[tile];
        let local = gather_tile(list, splats);
        let npx = ((x1 - x0) * (y1 - y0)) as usize;
        let mut out = TileForward {
            features: vec![T::zero(); npx * channels],
            final_t: vec![T::one(); npx],
            last: vec![0; npx],
            count: vec![0; npx],
        };
        let mut p = 0usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let px = T::lit(x as f64 + 0.5);
                let py = T::lit(y as f64 + 0.5);
                let acc = &mut out.features[p * channels..(p + 1) * channels];
                let mut trans = T::one();
                let mut last = 0u32;
                let mut count = 0u32;
                for (k, s) in local.iter().enumerate() {
                    let (power, _, _) = splat_power(s, px, py);
                    if power > T::zero() || power < s.power_cut {
                        continue;
                    }
                    let alpha = (s.opacity * power.exp()).min(alpha_max);
                    if alpha < alpha_min {
                        continue;
                    }
                    let next = trans * (T::one() - alpha);
                    if next < t_min {
                        break;
                    }
                    let w = alpha * trans;
                    let f = &features[list[k] as usize * channels..][..channels];
                    for c in 0..channels {
                        acc[c] += w * f[c];
                    }
                    trans = next;
                    last = k as u32 + 1;
                    count += 1;
                }
                out.final_t[p] = trans;
                out.last[p] = last;
                out.count[p] = count;
                p += 1;
            }
        }
        out
    });

    let npix = (width * height) as usize;
    let mut output = RasterOutput {
        width,
        height,
        channels,
        features: vec![T::zero(); npix * channels],
        alpha: vec![T::zero(); npix],
        final_transmittance: vec![T::one(); npix],
        last_entry: vec![0; npix],
        contrib_count: vec![0; npix],
    };
    for (tile, t) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, y1) = tile_pixels(tile, bins, width, height);
        let mut p = 0usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let g = (y * width + x) as usize;
                output.features[g * channels..(g + 1) * channels]
                    .copy_from_slice(&t.features[p * channels..(p + 1) * channels]);
                output.final_transmittance[g] = t.final_t[p];
                output.alpha[g] = T::one() - t.final_t[p];
                output.last_entry[g] = t.last[p];
                output.contrib_count[g] = t.count[p];
                p += 1;
            }
        }
    }
    output
}

/// Backward of [`rasterize_forward`].
///
/// `d_features` is dL/d(feature map) (`h * w * channels`), `d_alpha` is
/// dL/d(alpha map). Gradients are accumulated per tile and reduced in tile
/// order, so the result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn rasterize_backward<T: Real>(
    splats: &[ScreenSplat<T>],
    features: &[T],
    channels: usize,
    bins: &TileBins,
    forward: &RasterOutput<T>,
    d_features: &[T],
    d_alpha: &[T],
    mode: ExecMode,
) -> Result<RasterGrads<T>> {
    let width = forward.width;
    let height = forward.height;
    let npix = (width * height) as usize;
    if d_features.len() != npix * channels || d_alpha.len() != npix {
        return Err(CoreError::ShapeMismatch(format!(
            "backward maps ({}, {}) vs image {}x{}x{}",
            d_features.len(),
            d_alpha.len(),
            width,
            height,
            channels
        )));
    }
    let alpha_max = T::lit(ALPHA_MAX);
    let alpha_min = T::lit(ALPHA_MIN);
    let stride = 6 + channels;

    let tiles = run_tiles(mode, bins.lists.len(), |tile| {
        let (x0, y0, x1, y1) = tile_pixels(tile, bins, width, height);
        let list = &bins.lists[tile];
        let local = gather_tile(list, splats);
        let mut grads = vec![T::zero(); list.len() * stride];
        let mut accum = vec![T::zero(); channels];
        let mut last_feat = vec![T::zero(); channels];
        for y in y0..y1 {
            for x in x0..x1 {
                let g = (y * width + x) as usize;
                let last = forward.last_entry[g] as usize;
                if last == 0 {
                    continue;
                }
                let px = T::lit(x as f64 + 0.5);
                let py = T::lit(y as f64 + 0.5);
                let t_final = forward.final_transmittance[g];
                let dpix = &d_features[g * channels..(g + 1) * channels];
                let da = d_alpha[g];
                let mut trans = t_final;
                accum.iter_mut().for_each(|v| *v = T::zero());
                last_feat.iter_mut().for_each(|v| *v = T::zero());
                let mut last_alpha = T::zero();
                for k in (0..last).rev() {
                    let s = &local[k];
                    let (power, dx, dy) = splat_power(s, px, py);
                    if power > T::zero() || power < s.power_cut {
                        continue;
                    }
                    let gauss = power.exp();
                    let raw = s.opacity * gauss;
                    let alpha = raw.min(alpha_max);
                    if alpha < alpha_min {
                        continue;
                    }
                    let one_minus = T::one() - alpha;
                    trans = trans / one_minus;
                    let w = alpha * trans;
                    let f = &features[list[k] as usize * channels..][..channels];
                    let gk = &mut grads[k * stride..(k + 1) * stride];
                    let mut d_alpha_k = T::zero();
                    for c in 0..channels {
                        accum[c] = last_alpha * last_feat[c] + (T::one() - last_alpha) * accum[c];
                        last_feat[c] = f[c];
                        d_alpha_k += (f[c] - accum[c]) * dpix[c];
                        gk[6 + c] += w * dpix[c];
                    }
                    d_alpha_k *= trans;
                    // alpha map: A = 1 - prod(1 - a_j)
                    d_alpha_k += da * t_final / one_minus;
                    last_alpha = alpha;

                    if raw > alpha_max {
                        continue;
                    }
                    let d_g = s.opacity * d_alpha_k;
                    gk[5] += gauss * d_alpha_k;
                    let gd = gauss * d_g;
                    // d power / d mean = conic * d
                    gk[0] += gd * (s.conic[0] * dx + s.conic[1] * dy);
                    gk[1] += gd * (s.conic[1] * dx + s.conic[2] * dy);
                    gk[2] += -T::lit(0.5) * gd * dx * dx;
                    gk[3] += -gd * dx * dy;
                    gk[4] += -T::lit(0.5) * gd * dy * dy;
                }
            }
        }
        grads
    });

    let mut out: RasterGrads<T> = RasterGrads::zeros(splats.len(), channels);
    for (tile, grads) in tiles.into_iter().enumerate() {
        for (k, &idx) in bins.lists[tile].iter().enumerate() {
            let i = idx as usize;
            let gk = &grads[k * stride..(k + 1) * stride];
            out.mean[i][0] += gk[0];
            out.mean[i][1] += gk[1];
            out.conic[i][0] += gk[2];
            out.conic[i][1] += gk[3];
            out.conic[i][2] += gk[4];
            out.opacity[i] += gk[5];
            let fo = &mut out.features[i * channels..(i + 1) * channels];
            for c in 0..channels {
                fo[c] += gk[6 + c];
            }
        }
    }
    for i in 0..splats.len() {
        let finite = out.mean[i].iter().all(|v| v.is_finite())
            && out.conic[i].iter().all(|v| v.is_finite())
            && out.opacity[i].is_finite();
        if !finite {
            return Err(CoreError::NonFiniteGradient {
                index: i,
                attribute: "screen-space",
            });
        }
        if out.features[i * channels..(i + 1) * channels]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(CoreError::NonFiniteGradient {
                index: i,
                attribute: "features",
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_splat(opacity: f64, depth: f64) -> ScreenSplat<f64> {
        // very wide footprint: effectively constant over a small image
        let var = 1e8;
        ScreenSplat {
            mean: [4.0, 4.0],
            cov: [var, 0.0, var],
            conic: [1.0 / var, 0.0, 1.0 / var],
            opacity,
            depth,
            visible: true,
        }
    }

    #[test]
    fn single_saturated_splat() {
        let splats = [flat_splat(1.0, 1.0)];
        let feats = [1.0, 0.0, 0.0];
        let bins = bin_splats(&splats, 8, 8);
        let out = rasterize_forward(&splats, &feats, 3, &bins, 8, 8, ExecMode::Sequential);
        let c = &out.features[0..3];
        assert!((c[0] - 0.99).abs() < 1e-6 && c[1] == 0.0 && c[2] == 0.0);
        assert!((out.alpha[0] - 0.99).abs() < 1e-6);
    }

    #[test]
    fn two_layer_expansion() {
        let splats = [flat_splat(1.0, 2.0), flat_splat(0.5, 1.0)];
        let feats = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let bins = bin_splats(&splats, 8, 8);
        let out = rasterize_forward(&splats, &feats, 3, &bins, 8, 8, ExecMode::Sequential);
        let c = &out.features[0..3];
        assert!((c[0] - 0.5).abs() < 1e-6);
        assert!((c[2] - 0.5 * 0.99).abs() < 1e-6);
    }

    #[test]
    fn empty_scene_is_background() {
        let splats: [ScreenSplat<f32>; 0] = [];
        let bins = bin_splats(&splats, 20, 10);
        let out = rasterize_forward(&splats, &[], 3, &bins, 20, 10, ExecMode::Parallel);
        assert!(out.features.iter().all(|&v| v == 0.0));
        assert!(out.alpha.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let splats = [flat_splat(0.7, 1.0), flat_splat(0.4, 1.5)];
        let feats = [0.2, 0.5, 0.9, 0.1, 0.3, 0.4];
        let bins = bin_splats(&splats, 8, 8);
        let out = rasterize_forward(&splats, &feats, 3, &bins, 8, 8, ExecMode::Sequential);
        let g = rasterize_backward(
            &splats,
            &feats,
            3,
            &bins,
            &out,
            &vec![0.0; 64 * 3],
            &vec![0.0; 64],
            ExecMode::Sequential,
        )
        .unwrap();
        assert!(g.opacity.iter().all(|&v| v == 0.0));
        assert!(g.features.iter().all(|&v| v == 0.0));
        assert!(g.mean.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn opacity_gradient_positive_for_red_channel_loss() {
        let splats = [flat_splat(0.5, 1.0)];
        let feats = [0.8, 0.1, 0.1];
        let bins = bin_splats(&splats, 8, 8);
        let out = rasterize_forward(&splats, &feats, 3, &bins, 8, 8, ExecMode::Sequential);
        let mut d = vec![0.0; 64 * 3];
        d[0] = 1.0;
        let g = rasterize_backward(&splats, &feats, 3, &bins, &out, &d, &vec![0.0; 64], ExecMode::Sequential)
            .unwrap();
        assert!(g.opacity[0] > 0.0);
    }
}
