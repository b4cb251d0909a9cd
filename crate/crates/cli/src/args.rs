//! Value parsers for flags that take structured text.

use std::path::Path;

use volsplat_core::shading::LightConfig;
use volsplat_core::Camera;

use crate::error::{Failure, Result};

/// Vertical field of view of orbit cameras (matches the generated datasets).
pub const ORBIT_FOV_Y: f64 = volsplat_dvr::fixtures::CAMERA_FOV_Y;
pub const DEFAULT_SIZE: u32 = 256;

fn floats(s: &str, what: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad number '{v}' in {what}")))
        .collect()
}

fn fixed<const N: usize>(s: &str, what: &str) -> std::result::Result<[f64; N], String> {
    let v = floats(s, what)?;
    v.try_into().map_err(|v: Vec<f64>| format!("{what} needs {N} comma-separated values, got {}", v.len()))
}

pub fn parse_resolution(s: &str) -> std::result::Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let w: u32 = w.parse().map_err(|_| format!("bad width '{w}'"))?;
    let h: u32 = h.parse().map_err(|_| format!("bad height '{h}'"))?;
    if w == 0 || h == 0 {
        return Err("resolution must be positive".into());
    }
    Ok((w, h))
}

/// `headlight` or `orbital:POLAR,AZIMUTH` in degrees.
pub fn parse_light(s: &str) -> std::result::Result<LightConfig, String> {
    if s == "headlight" {
        return Ok(LightConfig::headlight());
    }
    let args = s
        .strip_prefix("orbital:")
        .ok_or_else(|| format!("expected 'headlight' or 'orbital:POLAR,AZIMUTH', got '{s}'"))?;
    let [p, a] = fixed::<2>(args, "orbital light")?;
    let light = LightConfig::orbital(p.to_radians(), a.to_radians());
    light.validate()?;
    Ok(light)
}

pub fn parse_rgb(s: &str) -> std::result::Result<[f32; 3], String> {
    let c = fixed::<3>(s, "color")?;
    if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(format!("color components must be in [0, 1], got {s}"));
    }
    Ok(c.map(|v| v as f32))
}

pub fn parse_four(s: &str) -> std::result::Result<[f64; 4], String> {
    fixed::<4>(s, "term values")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewCount {
    Auto,
    Fixed(usize),
}

pub fn parse_views(s: &str) -> std::result::Result<ViewCount, String> {
    if s == "auto" {
        return Ok(ViewCount::Auto);
    }
    s.parse().map(ViewCount::Fixed).map_err(|_| format!("expected 'auto' or a view count, got '{s}'"))
}

/// Distance at which a sphere around `bbox` fills the vertical field of view.
pub fn fit_radius(bbox: [[f64; 3]; 2], fov_y: f64) -> f64 {
    let half_diag = (0..3).map(|a| (bbox[1][a] - bbox[0][a]).powi(2)).sum::<f64>().sqrt() / 2.0;
    half_diag.max(1e-3) / (fov_y / 2.0).sin()
}

pub fn bbox_center(bbox: [[f64; 3]; 2]) -> [f64; 3] {
    [0, 1, 2].map(|a| 0.5 * (bbox[0][a] + bbox[1][a]))
}

/// Camera from `orbit:POLAR,AZIMUTH[,RADIUS[,W[,H]]]` (degrees, orbiting the
/// center of `bbox`), inline camera JSON, or a JSON file holding a camera or
/// a dataset manifest (`manifest.json#INDEX`, default index 0).
pub fn resolve_camera(spec: &str, bbox: [[f64; 3]; 2]) -> Result<Camera> {
    let cam = if let Some(args) = spec.strip_prefix("orbit:") {
        let v = floats(args, "orbit camera").map_err(Failure::invalid)?;
        if !(2..=5).contains(&v.len()) {
            return Err(Failure::invalid("orbit camera takes POLAR,AZIMUTH[,RADIUS[,W[,H]]]"));
        }
        let radius = v.get(2).copied().unwrap_or_else(|| fit_radius(bbox, ORBIT_FOV_Y));
        let size = |x: Option<&f64>, d: u32| -> Result<u32> {
            match x {
                None => Ok(d),
                Some(&x) if x >= 1.0 && x.fract() == 0.0 => Ok(x as u32),
                Some(x) => Err(Failure::invalid(format!("bad image size {x}"))),
            }
        };
        let w = size(v.get(3), DEFAULT_SIZE)?;
        let h = size(v.get(4), w)?;
        Camera::orbit(bbox_center(bbox), radius, v[0].to_radians(), v[1].to_radians(), ORBIT_FOV_Y, w, h)
    } else if spec.trim_start().starts_with('{') {
        serde_json::from_str(spec)?
    } else {
        let (path, index) = match spec.rsplit_once('#') {
            Some((p, i)) => (p, Some(i.parse::<usize>().map_err(|_| Failure::invalid(format!("bad camera index '{i}'")))?)),
            None => (spec, None),
        };
        read_camera(Path::new(path), index)?
    };
    cam.validate().map_err(Failure::invalid)?;
    Ok(cam)
}

fn read_camera(path: &Path, index: Option<usize>) -> Result<Camera> {
    let value: serde_json::Value = serde_json::from_slice(&std::fs::read(path)?)?;
    match value.get("cameras").and_then(|c| c.as_array()) {
        Some(cams) => {
            let i = index.unwrap_or(0);
            let c = cams
                .get(i)
                .ok_or_else(|| Failure::invalid(format!("{} has {} cameras, asked for {i}", path.display(), cams.len())))?;
            Ok(serde_json::from_value(c.clone())?)
        }
        None if index.is_some() => Err(Failure::invalid(format!("{} is not a manifest", path.display()))),
        None => Ok(serde_json::from_value(value)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolutions() {
        assert_eq!(parse_resolution("128x96"), Ok((128, 96)));
        assert!(parse_resolution("128").is_err());
        assert!(parse_resolution("0x5").is_err());
    }

    #[test]
    fn lights() {
        assert_eq!(parse_light("headlight"), Ok(LightConfig::headlight()));
        let l = parse_light("orbital:45,90").unwrap();
        assert!((l.polar - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(parse_light("orbital:120,0").is_err());
        assert!(parse_light("sun").is_err());
    }

    #[test]
    fn colors() {
        assert_eq!(parse_rgb("1,0.5,0"), Ok([1.0, 0.5, 0.0]));
        assert!(parse_rgb("1,2,0").is_err());
        assert!(parse_rgb("1,0").is_err());
    }

    #[test]
    fn orbit_camera_defaults() {
        let bbox = [[-1.0; 3], [1.0; 3]];
        let c = resolve_camera("orbit:0,0", bbox).unwrap();
        assert_eq!((c.width, c.height), (DEFAULT_SIZE, DEFAULT_SIZE));
        let c = resolve_camera("orbit:10,20,5,64,32", bbox).unwrap();
        assert_eq!((c.width, c.height), (64, 32));
        assert!(resolve_camera("orbit:1", bbox).is_err());
        assert!(resolve_camera("orbit:0,0,4,3.5", bbox).is_err());
    }

    #[test]
    fn inline_json_camera() {
        let bbox = [[-1.0; 3], [1.0; 3]];
        let c = resolve_camera("orbit:30,40,4,16,16", bbox).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(resolve_camera(&json, bbox).unwrap(), c);
    }
}
