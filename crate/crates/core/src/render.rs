//! Projection + rasterization glue: turns 3D splats with per-splat feature
//! vectors into maps, and chains the rasterizer gradients back to the 3D
//! parameters.

use crate::camera::Camera;
use crate::error::{CoreError, Result};
use crate::gaussian::{
    build_covariance, build_covariance_backward, project, project_backward, Projected,
    ProjectedGrad, ViewParams,
};
use crate::math::{dot, normalize, normalize_backward, sub, Mat3, Real, Vec3};
use crate::raster::{
    bin_splats, rasterize_backward, rasterize_forward, ExecMode, RasterOutput, ScreenSplat,
    TileBins,
};

/// Geometry of a splat set. `scale` holds positive scales, `opacity` the
/// sigmoid-mapped opacity; quaternions are normalized internally.
#[derive(Clone, Copy, Debug)]
pub struct SplatGeometry<'a, T> {
    pub mu: &'a [Vec3<T>],
    pub rotation: &'a [[T; 4]],
    pub scale: &'a [Vec3<T>],
    pub opacity: &'a [T],
}

impl<T> SplatGeometry<'_, T> {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.mu.len();
        if self.rotation.len() != n || self.scale.len() != n || self.opacity.len() != n {
            return Err(CoreError::ShapeMismatch(format!(
                "geometry arrays: mu {}, rotation {}, scale {}, opacity {}",
                n,
                self.rotation.len(),
                self.scale.len(),
                self.opacity.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RenderSettings {
    pub depth: bool,
    pub normals: bool,
    pub mode: ExecMode,
}

/// Rendered maps, all `height * width` pixel-major.
#[derive(Clone, Debug)]
pub struct RenderOutput<T> {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    /// Caller features composited, `channels` per pixel.
    pub features: Vec<T>,
    pub alpha: Vec<T>,
    /// Transmittance-weighted camera-space depth (not divided by alpha).
    pub depth: Option<Vec<T>>,
    /// Composited world-space normals oriented toward the camera, 3 per pixel.
    pub normal: Option<Vec<T>>,
    pub contrib_count: Vec<u32>,
}

impl<T: Real> RenderOutput<T> {
    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    /// Extracts channel range `[start, start+len)` of the feature map.
    pub fn feature_slice(&self, start: usize, len: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.pixel_count() * len);
        for p in 0..self.pixel_count() {
            out.extend_from_slice(&self.features[p * self.channels + start..][..len]);
        }
        out
    }
}

/// Everything the backward pass needs from a forward render.
pub struct RenderState<T> {
    view: ViewParams<T>,
    sigma: Vec<Mat3<T>>,
    projected: Vec<Option<Projected<T>>>,
    screen: Vec<ScreenSplat<T>>,
    bins: TileBins,
    raster: RasterOutput<T>,
    packed: Vec<T>,
    stride: usize,
    channels: usize,
    depth_at: Option<usize>,
    normal_at: Option<usize>,
    normal_sign: Vec<T>,
    mode: ExecMode,
}

impl<T: Real> RenderState<T> {
    /// Projected screen-space data (diagnostics, densification statistics).
    pub fn screen(&self) -> &[ScreenSplat<T>] {
        &self.screen
    }

    /// Number of tile-list entries across all tiles.
    pub fn binned_entries(&self) -> usize {
        self.bins.lists.iter().map(Vec::len).sum()
    }
}

/// Per-splat gradients of a render.
#[derive(Clone, Debug)]
pub struct RenderGrads<T> {
    pub mu: Vec<Vec3<T>>,
    /// With respect to the raw (unnormalized) quaternion.
    pub rotation: Vec<[T; 4]>,
    pub scale: Vec<Vec3<T>>,
    /// With respect to the mapped opacity.
    pub opacity: Vec<T>,
    pub features: Vec<T>,
    /// With respect to the raw (unnormalized) normals.
    pub normals: Vec<Vec3<T>>,
    /// Screen-space mean gradient in pixels.
    pub mean2d: Vec<[T; 2]>,
}

/// Camera-facing sign of a splat normal.
pub fn facing_sign<T: Real>(n: Vec3<T>, mu: Vec3<T>, cam_pos: Vec3<T>) -> T {
    if dot(n, sub(cam_pos, mu)) < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

/// Renders `features` (`channels` per splat) with the given geometry.
pub fn render<T: Real>(
    geom: &SplatGeometry<'_, T>,
    features: &[T],
    channels: usize,
    normals: Option<&[Vec3<T>]>,
    cam: &Camera,
    settings: &RenderSettings,
) -> Result<(RenderOutput<T>, RenderState<T>)> {
    geom.check()?;
    let n = geom.len();
    if features.len() != n * channels {
        return Err(CoreError::ShapeMismatch(format!(
            "features {} for {} splats x {} channels",
            features.len(),
            n,
            channels
        )));
    }
    if settings.normals && normals.is_none_or(|v| v.len() != n) {
        return Err(CoreError::ShapeMismatch("normal map requested without per-splat normals".into()));
    }
    let view = ViewParams::<T>::new(cam);
    let cam_pos = view.position;
    let depth_at = settings.depth.then_some(channels);
    let normal_at = settings.normals.then_some(channels + settings.depth as usize);
    let stride = channels + settings.depth as usize + 3 * settings.normals as usize;

    let mut sigma = Vec::with_capacity(n);
    let mut projected = Vec::with_capacity(n);
    let mut screen = Vec::with_capacity(n);
    let mut packed = vec![T::zero(); n * stride];
    let mut normal_sign = vec![T::one(); if settings.normals { n } else { 0 }];
    for i in 0..n {
        let s = build_covariance(geom.rotation[i], geom.scale[i]);
        let p = project(geom.mu[i], &s, &view).ok();
        sigma.push(s);
        screen.push(match &p {
            Some(p) => ScreenSplat {
                mean: p.mean,
                cov: p.cov,
                conic: p.conic,
                opacity: geom.opacity[i],
                depth: p.depth,
                visible: true,
            },
            None => ScreenSplat::hidden(),
        });
        let row = &mut packed[i * stride..(i + 1) * stride];
        row[..channels].copy_from_slice(&features[i * channels..(i + 1) * channels]);
        if let (Some(at), Some(p)) = (depth_at, &p) {
            row[at] = p.depth;
        }
        if let (Some(at), Some(ns)) = (normal_at, normals) {
            let u = normalize(ns[i]);
            let sign = facing_sign(u, geom.mu[i], cam_pos);
            normal_sign[i] = sign;
            for k in 0..3 {
                row[at + k] = sign * u[k];
            }
        }
        projected.push(p);
    }

    let bins = bin_splats(&screen, cam.width, cam.height);
    let raster = rasterize_forward(&screen, &packed, stride, &bins, cam.width, cam.height, settings.mode);

    let npix = (cam.width * cam.height) as usize;
    let mut feat = Vec::with_capacity(npix * channels);
    let mut depth = depth_at.map(|_| Vec::with_capacity(npix));
    let mut normal = normal_at.map(|_| Vec::with_capacity(npix * 3));
    for p in 0..npix {
        let row = &raster.features[p * stride..(p + 1) * stride];
        feat.extend_from_slice(&row[..channels]);
        if let (Some(d), Some(at)) = (depth.as_mut(), depth_at) {
            d.push(row[at]);
        }
        if let (Some(nm), Some(at)) = (normal.as_mut(), normal_at) {
            nm.extend_from_slice(&row[at..at + 3]);
        }
    }
    let output = RenderOutput {
        width: cam.width,
        height: cam.height,
        channels,
        features: feat,
        alpha: raster.alpha.clone(),
        depth,
        normal,
        contrib_count: raster.contrib_count.clone(),
    };
    let state = RenderState {
        view,
        sigma,
        projected,
        screen,
        bins,
        raster,
        packed,
        stride,
        channels,
        depth_at,
        normal_at,
        normal_sign,
        mode: settings.mode,
    };
    Ok((output, state))
}

/// Upstream gradients with respect to the maps of a [`RenderOutput`].
#[derive(Clone, Copy, Debug)]
pub struct MapGrads<'a, T> {
    pub features: &'a [T],
    pub alpha: &'a [T],
    pub depth: Option<&'a [T]>,
    pub normal: Option<&'a [T]>,
}

/// Backward of [`render`].
pub fn render_backward<T: Real>(
    geom: &SplatGeometry<'_, T>,
    normals: Option<&[Vec3<T>]>,
    state: &RenderState<T>,
    upstream: &MapGrads<'_, T>,
) -> Result<RenderGrads<T>> {
    let n = geom.len();
    let npix = (state.raster.width * state.raster.height) as usize;
    let channels = state.channels;
    let stride = state.stride;
    if upstream.features.len() != npix * channels {
        return Err(CoreError::ShapeMismatch(format!(
            "feature gradient {} vs {} pixels x {} channels",
            upstream.features.len(),
            npix,
            channels
        )));
    }
    let mut d_packed = vec![T::zero(); npix * stride];
    for p in 0..npix {
        let row = &mut d_packed[p * stride..(p + 1) * stride];
        row[..channels].copy_from_slice(&upstream.features[p * channels..(p + 1) * channels]);
        if let (Some(at), Some(d)) = (state.depth_at, upstream.depth) {
            row[at] = d[p];
        }
        if let (Some(at), Some(d)) = (state.normal_at, upstream.normal) {
            row[at..at + 3].copy_from_slice(&d[p * 3..p * 3 + 3]);
        }
    }
    let rg = rasterize_backward(
        &state.screen,
        &state.packed,
        stride,
        &state.bins,
        &state.raster,
        &d_packed,
        upstream.alpha,
        state.mode,
    )?;

    let mut out = RenderGrads {
        mu: vec![[T::zero(); 3]; n],
        rotation: vec![[T::zero(); 4]; n],
        scale: vec![[T::zero(); 3]; n],
        opacity: rg.opacity,
        features: Vec::with_capacity(n * channels),
        normals: vec![[T::zero(); 3]; if state.normal_at.is_some() { n } else { 0 }],
        mean2d: rg.mean,
    };
    for i in 0..n {
        let row = &rg.features[i * stride..(i + 1) * stride];
        out.features.extend_from_slice(&row[..channels]);
        let Some(proj) = &state.projected[i] else { continue };
        let pg = ProjectedGrad {
            mean: out.mean2d[i],
            conic: rg.conic[i],
            depth: state.depth_at.map_or(T::zero(), |at| row[at]),
        };
        let (g_mu, g_sigma) = project_backward(geom.mu[i], &state.sigma[i], &state.view, proj, &pg);
        let (g_q, g_s) = build_covariance_backward(geom.rotation[i], geom.scale[i], &g_sigma);
        out.mu[i] = g_mu;
        out.rotation[i] = g_q;
        out.scale[i] = g_s;
        if let (Some(at), Some(ns)) = (state.normal_at, normals) {
            let sign = state.normal_sign[i];
            let g_unit = [sign * row[at], sign * row[at + 1], sign * row[at + 2]];
            out.normals[i] = normalize_backward(ns[i], g_unit);
        }
    }
    for i in 0..n {
        let bad = out.mu[i].iter().chain(out.scale[i].iter()).chain(out.rotation[i].iter()).any(|v| !v.is_finite());
        if bad {
            return Err(CoreError::NonFiniteGradient {
                index: i,
                attribute: "geometry",
            });
        }
    }
    Ok(out)
}
