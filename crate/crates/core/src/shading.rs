//! Blinn-Phong color of editable splats.
//!
//! `c_v = clamp01(c_p + dc)`, ambient `k_a c_v`, diffuse `k_d c_v |n.l|`,
//! specular `k_s |n.h|^beta` in white when `|n.l| > 0`.

use serde::{Deserialize, Serialize};

use crate::camera::spherical_direction;
use crate::math::{
    add, cast3, clamp01, dot, norm, normalize, normalize_backward, scale, sigmoid, sub, Real,
    Vec3,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightMode {
    #[default]
    Headlight,
    Orbital,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightConfig {
    pub mode: LightMode,
    /// Radians, orbital only.
    #[serde(default)]
    pub polar: f64,
    /// Radians, orbital only.
    #[serde(default)]
    pub azimuth: f64,
    /// Global multipliers on `(k_a, k_d, k_s, beta)`.
    #[serde(default = "unit_scales")]
    pub term_scales: [f64; 4],
}

fn unit_scales() -> [f64; 4] {
    [1.0; 4]
}

impl Default for LightConfig {
    fn default() -> Self {
        LightConfig::headlight()
    }
}

impl LightConfig {
    pub fn headlight() -> Self {
        LightConfig {
            mode: LightMode::Headlight,
            polar: 0.0,
            azimuth: 0.0,
            term_scales: unit_scales(),
        }
    }

    pub fn orbital(polar: f64, azimuth: f64) -> Self {
        LightConfig {
            mode: LightMode::Orbital,
            polar,
            azimuth,
            term_scales: unit_scales(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        use std::f64::consts::{FRAC_PI_2, PI};
        if self.mode == LightMode::Orbital {
            if !(-FRAC_PI_2 - 1e-12..=FRAC_PI_2 + 1e-12).contains(&self.polar) {
                return Err(format!("polar {} outside [-pi/2, pi/2]", self.polar));
            }
            if !(-PI - 1e-12..=PI + 1e-12).contains(&self.azimuth) {
                return Err(format!("azimuth {} outside [-pi, pi]", self.azimuth));
            }
        }
        if self.term_scales.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err("term scales must be finite and nonnegative".into());
        }
        Ok(())
    }

    /// Light for one camera/splat pair.
    pub fn light<T: Real>(&self) -> Light<T> {
        match self.mode {
            LightMode::Headlight => Light::Headlight,
            LightMode::Orbital => Light::Directional(cast3(spherical_direction(self.polar, self.azimuth))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Light<T> {
    /// Point light at the camera.
    Headlight,
    /// Unit direction toward the light.
    Directional(Vec3<T>),
}

/// Unit direction from `mu` toward the light.
pub fn resolve_light_direction<T: Real>(light: &Light<T>, cam_pos: Vec3<T>, mu: Vec3<T>) -> Vec3<T> {
    match light {
        Light::Headlight => normalize(sub(cam_pos, mu)),
        Light::Directional(l) => *l,
    }
}

/// Affine transform on `(k_a, k_d, k_s, beta)` applied before shading;
/// results are clamped to `[0,1]` (coefficients) and `>= 1` (shininess).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermTransform<T> {
    pub scale: [T; 4],
    pub bias: [T; 4],
}

impl<T: Real> Default for TermTransform<T> {
    fn default() -> Self {
        TermTransform {
            scale: [T::one(); 4],
            bias: [T::zero(); 4],
        }
    }
}

impl<T: Real> TermTransform<T> {
    pub fn apply(&self, k: [T; 4]) -> [T; 4] {
        let mut out = [T::zero(); 4];
        for j in 0..3 {
            out[j] = clamp01(self.scale[j] * k[j] + self.bias[j]);
        }
        out[3] = (self.scale[3] * k[3] + self.bias[3]).max(T::one());
        out
    }

    /// Derivative mask of [`apply`]: 1 where the clamp is inactive.
    fn pass(&self, k: [T; 4]) -> [T; 4] {
        let mut out = [T::zero(); 4];
        for j in 0..3 {
            let x = self.scale[j] * k[j] + self.bias[j];
            if x >= T::zero() && x <= T::one() {
                out[j] = T::one();
            }
        }
        if self.scale[3] * k[3] + self.bias[3] >= T::one() {
            out[3] = T::one();
        }
        out
    }
}

/// Maps stored shading attributes to `(k_a, k_d, k_s, beta)`.
pub fn map_terms<T: Real>(raw: [T; 4]) -> [T; 4] {
    [sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2]), raw[3].exp() + T::one()]
}

/// Derivative of [`map_terms`] per component.
pub fn map_terms_derivative<T: Real>(raw: [T; 4]) -> [T; 4] {
    let d = |x: T| {
        let s = sigmoid(x);
        s * (T::one() - s)
    };
    [d(raw[0]), d(raw[1]), d(raw[2]), raw[3].exp()]
}

/// Stored value that maps to shininess `beta`.
pub fn beta_to_raw(beta: f64) -> f64 {
    (beta - 1.0).ln()
}

/// The three Blinn-Phong terms; specular is a white scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShadeTerms<T> {
    pub ambient: Vec3<T>,
    pub diffuse: Vec3<T>,
    pub specular: T,
}

impl<T: Real> ShadeTerms<T> {
    pub fn rgb(&self) -> Vec3<T> {
        let s = self.specular;
        let a = add(self.ambient, self.diffuse);
        [a[0] + s, a[1] + s, a[2] + s]
    }
}

/// Half vector `normalize(v + l)`; falls back to `v` when `v = -l`.
fn half_vector<T: Real>(v: Vec3<T>, l: Vec3<T>) -> Vec3<T> {
    let s = add(v, l);
    if norm(s) < T::lit(1e-12) {
        v
    } else {
        normalize(s)
    }
}

/// Blinn-Phong with unit `n`, light direction `l`, view direction `v`
/// (both pointing away from the surface) and `k = (k_a, k_d, k_s, beta)`.
pub fn blinn_phong<T: Real>(c_v: Vec3<T>, n: Vec3<T>, l: Vec3<T>, v: Vec3<T>, k: [T; 4]) -> ShadeTerms<T> {
    let ndl = dot(n, l).abs();
    let h = half_vector(v, l);
    let ndh = dot(n, h).abs();
    let specular = if ndl > T::zero() { k[2] * ndh.powf(k[3]) } else { T::zero() };
    ShadeTerms {
        ambient: scale(c_v, k[0]),
        diffuse: scale(c_v, k[1] * ndl),
        specular,
    }
}

/// Inputs of one editable splat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatShading<T> {
    pub palette: Vec3<T>,
    pub offset: Vec3<T>,
    /// Mapped `(k_a, k_d, k_s, beta)` before the term transform.
    pub terms: [T; 4],
    /// Raw (unnormalized) normal.
    pub normal: Vec3<T>,
    pub mu: Vec3<T>,
}

pub fn shade<T: Real>(
    s: &SplatShading<T>,
    light: &Light<T>,
    transform: &TermTransform<T>,
    cam_pos: Vec3<T>,
) -> ShadeTerms<T> {
    let c_v = add(s.palette, s.offset).map(clamp01);
    let n = normalize(s.normal);
    let v = normalize(sub(cam_pos, s.mu));
    let l = resolve_light_direction(light, cam_pos, s.mu);
    blinn_phong(c_v, n, l, v, transform.apply(s.terms))
}

/// Gradients of a scalar loss through [`shade`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShadeGrads<T> {
    pub palette: Vec3<T>,
    pub offset: Vec3<T>,
    /// With respect to the mapped terms before the transform.
    pub terms: [T; 4],
    pub normal: Vec3<T>,
    pub mu: Vec3<T>,
    pub transform_scale: [T; 4],
    pub transform_bias: [T; 4],
    /// With respect to the directional light vector (zero for headlights).
    pub light_dir: Vec3<T>,
}

/// Backward of [`shade`] given upstream gradients for each term. When only
/// the summed color matters pass the same gradient for all three.
pub fn shade_backward<T: Real>(
    s: &SplatShading<T>,
    light: &Light<T>,
    transform: &TermTransform<T>,
    cam_pos: Vec3<T>,
    g_ambient: Vec3<T>,
    g_diffuse: Vec3<T>,
    g_specular: T,
) -> ShadeGrads<T> {
    let zero = T::zero();
    let pre_cv = add(s.palette, s.offset);
    let c_v = pre_cv.map(clamp01);
    let n = normalize(s.normal);
    let view_raw = sub(cam_pos, s.mu);
    let v = normalize(view_raw);
    let l = resolve_light_direction(light, cam_pos, s.mu);
    let k = transform.apply(s.terms);

    let ndl_s = dot(n, l);
    let ndl = ndl_s.abs();
    let vl = add(v, l);
    let degenerate_h = norm(vl) < T::lit(1e-12);
    let h = if degenerate_h { v } else { normalize(vl) };
    let ndh_s = dot(n, h);
    let ndh = ndh_s.abs();
    let sign = |x: T| {
        if x > zero {
            T::one()
        } else if x < zero {
            -T::one()
        } else {
            zero
        }
    };

    let ga_cv = dot(g_ambient, c_v);
    let gd_cv = dot(g_diffuse, c_v);
    let mut g_k = [zero; 4];
    g_k[0] = ga_cv;
    g_k[1] = gd_cv * ndl;
    let mut g_ndl = k[1] * gd_cv;
    let mut g_ndh = zero;
    if ndl > zero && g_specular != zero {
        let pw = ndh.powf(k[3]);
        g_k[2] = g_specular * pw;
        if ndh > zero {
            g_k[3] = g_specular * k[2] * pw * ndh.ln();
            g_ndh = g_specular * k[2] * k[3] * ndh.powf(k[3] - T::one());
        }
    }
    let mut g_cv = [zero; 3];
    for c in 0..3 {
        g_cv[c] = g_ambient[c] * k[0] + g_diffuse[c] * k[1] * ndl;
    }
    let mut g_pre = [zero; 3];
    for c in 0..3 {
        if pre_cv[c] >= zero && pre_cv[c] <= T::one() {
            g_pre[c] = g_cv[c];
        }
    }

    g_ndl *= sign(ndl_s);
    g_ndh *= sign(ndh_s);
    let g_n_unit = add(scale(l, g_ndl), scale(h, g_ndh));
    let g_h = scale(n, g_ndh);
    let mut g_l = scale(n, g_ndl);
    let mut g_v = [zero; 3];
    if degenerate_h {
        g_v = add(g_v, g_h);
    } else {
        let g_vl = normalize_backward(vl, g_h);
        g_v = add(g_v, g_vl);
        g_l = add(g_l, g_vl);
    }
    let light_dir = match light {
        Light::Headlight => {
            g_v = add(g_v, g_l);
            [zero; 3]
        }
        Light::Directional(_) => g_l,
    };
    let g_mu = scale(normalize_backward(view_raw, g_v), -T::one());

    let pass = transform.pass(s.terms);
    let mut terms = [zero; 4];
    let mut t_scale = [zero; 4];
    let mut t_bias = [zero; 4];
    for j in 0..4 {
        let g = g_k[j] * pass[j];
        terms[j] = g * transform.scale[j];
        t_scale[j] = g * s.terms[j];
        t_bias[j] = g;
    }
    ShadeGrads {
        palette: g_pre,
        offset: g_pre,
        terms,
        normal: normalize_backward(s.normal, g_n_unit),
        mu: g_mu,
        transform_scale: t_scale,
        transform_bias: t_bias,
        light_dir,
    }
}

/// Gradient of the orbital light direction with respect to (polar, azimuth).
pub fn light_angle_grad(polar: f64, azimuth: f64, g_dir: [f64; 3]) -> [f64; 2] {
    let (sp, cp) = polar.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    let d_polar = [-sp * ca, -sp * sa, cp];
    let d_azimuth = [-cp * sa, cp * ca, 0.0];
    [dot(g_dir, d_polar), dot(g_dir, d_azimuth)]
}
