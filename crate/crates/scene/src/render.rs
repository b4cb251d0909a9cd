//! Forward rendering of effective scenes: named attribute maps and the
//! display modes of the editor.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use volsplat_core::raster::ExecMode;
use volsplat_core::render::{render, RenderSettings, SplatGeometry};
use volsplat_core::sh::{coeff_count, eval_sh_at};
use volsplat_core::shading::{shade, ShadeTerms, SplatShading};
use volsplat_core::{Camera, CoreError, RgbaImage};

use crate::compose::{EffectiveAppearance, EffectiveScene};
use crate::error::Result;

/// Per-splat quantities that can be composited into a map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attribute {
    /// Shaded color (ambient + diffuse + specular), or SH color for base models.
    Rgb,
    Ambient,
    Diffuse,
    /// White specular term, replicated over three channels.
    Specular,
    Offset,
    Palette,
    /// Transformed shading coefficients, one channel each.
    Ka,
    Kd,
    Ks,
    Beta,
    /// Constant 1 (the resulting map equals alpha).
    Ones,
    /// Indicator of one basic scene.
    Scene(u32),
}

impl Attribute {
    pub fn channels(self) -> usize {
        match self {
            Attribute::Rgb | Attribute::Ambient | Attribute::Diffuse | Attribute::Specular => 3,
            Attribute::Offset | Attribute::Palette => 3,
            _ => 1,
        }
    }

    fn needs_shading(self) -> bool {
        !matches!(self, Attribute::Rgb | Attribute::Ones | Attribute::Scene(_))
    }
}

impl FromStr for Attribute {
    type Err = CoreError;

    fn from_str(s: &str) -> std::result::Result<Self, CoreError> {
        Ok(match s {
            "rgb" | "color" => Attribute::Rgb,
            "ambient" => Attribute::Ambient,
            "diffuse" => Attribute::Diffuse,
            "specular" => Attribute::Specular,
            "offset" => Attribute::Offset,
            "palette" => Attribute::Palette,
            "k_a" => Attribute::Ka,
            "k_d" => Attribute::Kd,
            "k_s" => Attribute::Ks,
            "beta" => Attribute::Beta,
            "ones" => Attribute::Ones,
            _ => match s.strip_prefix("scene:").map(str::parse) {
                Some(Ok(i)) => Attribute::Scene(i),
                _ => return Err(CoreError::UnknownAttribute(s.to_string())),
            },
        })
    }
}

/// Composited maps of one view; every map shares the same weights.
#[derive(Clone, Debug)]
pub struct AttributeMaps {
    pub width: u32,
    pub height: u32,
    pub alpha: Vec<f32>,
    /// Transmittance-weighted camera depth.
    pub depth: Option<Vec<f32>>,
    /// Camera-facing world normals, alpha-weighted.
    pub normal: Option<Vec<f32>>,
    pub maps: Vec<(Attribute, Vec<f32>)>,
}

impl AttributeMaps {
    pub fn get(&self, a: Attribute) -> Option<&[f32]> {
        self.maps.iter().find(|(k, _)| *k == a).map(|(_, v)| v.as_slice())
    }
}

/// Shading terms of every splat for a camera (editable scenes only).
pub fn shade_all(scene: &EffectiveScene, cam_pos: [f32; 3]) -> Option<Vec<ShadeTerms<f32>>> {
    let EffectiveAppearance::Shading {
        palettes,
        offset,
        terms,
        transform,
    } = &scene.appearance
    else {
        return None;
    };
    let light = scene.light.light::<f32>();
    Some(
        (0..scene.len())
            .map(|i| {
                let s = SplatShading {
                    palette: palettes[scene.scene_id[i] as usize],
                    offset: offset[i],
                    terms: terms[i],
                    normal: scene.normal[i],
                    mu: scene.mu[i],
                };
                shade(&s, &light, transform, cam_pos)
            })
            .collect(),
    )
}

/// Composites the requested attributes plus optional depth and normal maps.
pub fn render_attributes(
    scene: &EffectiveScene,
    cam: &Camera,
    attrs: &[Attribute],
    depth: bool,
    normals: bool,
    mode: ExecMode,
) -> Result<AttributeMaps> {
    let n = scene.len();
    let cam_pos = cam.position.map(|v| v as f32);
    let shaded = attrs.iter().any(|a| a.needs_shading() || *a == Attribute::Rgb);
    let terms = if shaded { shade_all(scene, cam_pos) } else { None };
    if let Some(a) = attrs.iter().find(|a| a.needs_shading()) {
        if terms.is_none() {
            return Err(CoreError::UnknownAttribute(format!("{a:?} (model has no shading attributes)")).into());
        }
    }
    let channels: usize = attrs.iter().map(|a| a.channels()).sum();
    let mut features = vec![0.0f32; n * channels];
    let transformed: Option<Vec<[f32; 4]>> = match &scene.appearance {
        EffectiveAppearance::Shading { terms, transform, .. } => Some(terms.iter().map(|&t| transform.apply(t)).collect()),
        EffectiveAppearance::Sh { .. } => None,
    };
    for i in 0..n {
        let row = &mut features[i * channels..(i + 1) * channels];
        let mut at = 0;
        for &a in attrs {
            let w = a.channels();
            let dst = &mut row[at..at + w];
            match a {
                Attribute::Rgb => match (&terms, &scene.appearance) {
                    (Some(t), _) => dst.copy_from_slice(&t[i].rgb()),
                    (None, EffectiveAppearance::Sh { degree, coeffs }) => {
                        let k = coeff_count(*degree);
                        dst.copy_from_slice(&eval_sh_at(&coeffs[i * k..(i + 1) * k], *degree, scene.mu[i], cam_pos));
                    }
                    _ => unreachable!(),
                },
                Attribute::Ambient => dst.copy_from_slice(&terms.as_ref().unwrap()[i].ambient),
                Attribute::Diffuse => dst.copy_from_slice(&terms.as_ref().unwrap()[i].diffuse),
                Attribute::Specular => dst.fill(terms.as_ref().unwrap()[i].specular),
                Attribute::Offset | Attribute::Palette => {
                    let EffectiveAppearance::Shading { palettes, offset, .. } = &scene.appearance else {
                        unreachable!()
                    };
                    let v = if a == Attribute::Offset { offset[i] } else { palettes[scene.scene_id[i] as usize] };
                    dst.copy_from_slice(&v);
                }
                Attribute::Ka | Attribute::Kd | Attribute::Ks | Attribute::Beta => {
                    let j = [Attribute::Ka, Attribute::Kd, Attribute::Ks, Attribute::Beta]
                        .iter()
                        .position(|&x| x == a)
                        .unwrap();
                    dst[0] = transformed.as_ref().unwrap()[i][j];
                }
                Attribute::Ones => dst[0] = 1.0,
                Attribute::Scene(s) => dst[0] = (scene.scene_id[i] == s) as u32 as f32,
            }
            at += w;
        }
    }
    let geom = SplatGeometry {
        mu: &scene.mu,
        rotation: &scene.rotation,
        scale: &scene.scale,
        opacity: &scene.opacity,
    };
    let settings = RenderSettings { depth, normals, mode };
    let (out, _) = render(&geom, &features, channels, Some(&scene.normal), cam, &settings)?;
    let npix = out.pixel_count();
    let mut maps = Vec::with_capacity(attrs.len());
    let mut at = 0;
    for &a in attrs {
        let w = a.channels();
        let mut m = Vec::with_capacity(npix * w);
        for p in 0..npix {
            m.extend_from_slice(&out.features[p * channels + at..p * channels + at + w]);
        }
        maps.push((a, m));
        at += w;
    }
    Ok(AttributeMaps {
        width: out.width,
        height: out.height,
        alpha: out.alpha,
        depth: out.depth,
        normal: out.normal,
        maps,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    #[default]
    Shaded,
    Normal,
    Ambient,
    Diffuse,
    Specular,
    Depth,
    Alpha,
}

impl RenderMode {
    pub const ALL: [RenderMode; 7] = [
        RenderMode::Shaded,
        RenderMode::Normal,
        RenderMode::Ambient,
        RenderMode::Diffuse,
        RenderMode::Specular,
        RenderMode::Depth,
        RenderMode::Alpha,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RenderMode::Shaded => "shaded",
            RenderMode::Normal => "normal",
            RenderMode::Ambient => "ambient",
            RenderMode::Diffuse => "diffuse",
            RenderMode::Specular => "specular",
            RenderMode::Depth => "depth",
            RenderMode::Alpha => "alpha",
        }
    }
}

impl FromStr for RenderMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        RenderMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown render mode '{s}' (expected one of shaded, normal, ambient, diffuse, specular, depth, alpha)"))
    }
}

impl std::fmt::Display for RenderMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Premultiplied image from a premultiplied rgb map, clamped to `[0, alpha]`.
pub fn color_image(width: u32, height: u32, rgb: &[f32], alpha: &[f32]) -> RgbaImage {
    let mut data = Vec::with_capacity(alpha.len() * 4);
    for (p, &a) in alpha.iter().enumerate() {
        let a = a.clamp(0.0, 1.0);
        data.extend(rgb[3 * p..3 * p + 3].iter().map(|&c| c.clamp(0.0, a)));
        data.push(a);
    }
    RgbaImage { width, height, data }
}

/// Renders one display mode. Term modes show the pre-clamp term maps with the
/// same final clamp as the shaded image; normals map `[-1, 1]` to `[0, 1]`;
/// depth maps near to bright; alpha is shown as opaque gray.
pub fn render_mode(scene: &EffectiveScene, cam: &Camera, mode: RenderMode, exec: ExecMode) -> Result<RgbaImage> {
    let (w, h) = (cam.width, cam.height);
    let attr = match mode {
        RenderMode::Ambient => Some(Attribute::Ambient),
        RenderMode::Diffuse => Some(Attribute::Diffuse),
        RenderMode::Specular => Some(Attribute::Specular),
        RenderMode::Shaded => Some(Attribute::Rgb),
        _ => None,
    };
    let maps = render_attributes(
        scene,
        cam,
        attr.as_slice(),
        mode == RenderMode::Depth,
        mode == RenderMode::Normal,
        exec,
    )?;
    let alpha = &maps.alpha;
    Ok(match mode {
        RenderMode::Shaded | RenderMode::Ambient | RenderMode::Diffuse | RenderMode::Specular => {
            color_image(w, h, &maps.maps[0].1, alpha)
        }
        RenderMode::Normal => {
            let nm = maps.normal.as_ref().expect("requested");
            let rgb: Vec<f32> = nm.iter().enumerate().map(|(k, &v)| 0.5 * (v + alpha[k / 3])).collect();
            color_image(w, h, &rgb, alpha)
        }
        RenderMode::Depth => {
            let d = maps.depth.as_ref().expect("requested");
            let z: Vec<Option<f32>> = d.iter().zip(alpha).map(|(&d, &a)| (a > 0.01).then(|| d / a)).collect();
            let lo = z.iter().flatten().copied().fold(f32::INFINITY, f32::min);
            let hi = z.iter().flatten().copied().fold(f32::NEG_INFINITY, f32::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let mut rgb = Vec::with_capacity(3 * z.len());
            for (zi, &a) in z.iter().zip(alpha) {
                let g = zi.map_or(0.0, |z| a * (1.0 - (z - lo) / span));
                rgb.extend([g; 3]);
            }
            color_image(w, h, &rgb, alpha)
        }
        RenderMode::Alpha => {
            let mut data = Vec::with_capacity(alpha.len() * 4);
            for &a in alpha {
                let a = a.clamp(0.0, 1.0);
                data.extend([a, a, a, 1.0]);
            }
            RgbaImage { width: w, height: h, data }
        }
    })
}

/// Shaded image (the usual render).
pub fn render_image(scene: &EffectiveScene, cam: &Camera, exec: ExecMode) -> Result<RgbaImage> {
    render_mode(scene, cam, RenderMode::Shaded, exec)
}
