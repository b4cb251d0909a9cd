//! Scalar grids centered at the origin and the analytic generators used as
//! test datasets.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DvrError, Result};

/// Regular scalar grid, x fastest. Voxel centers span
/// `[-(dims-1) spacing / 2, (dims-1) spacing / 2]` on each axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f32>,
}

/// How a volume was produced; stored in dataset manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VolumeSpec {
    /// Radial ramp `1 - r` with an angular wobble; nested iso-shells.
    Shells { dims: usize, wobble: f64 },
    /// Marschner-Lobb test signal.
    Ml { dims: usize },
    /// Swirling procedural field.
    Vortex { dims: usize },
    /// Little-endian f32 grid with a sidecar `<file>.json` holding `dims` (and optional `spacing`).
    Raw { path: String },
}

#[derive(Deserialize)]
struct RawSidecar {
    dims: [usize; 3],
    #[serde(default)]
    spacing: Option<[f64; 3]>,
}

impl VolumeSpec {
    /// Parses `name[:key=value,...]` (`shells`, `ml`, `vortex`) or a raw file path.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let mut dims = 64usize;
        let mut wobble = 0.08f64;
        for kv in args.split(',').filter(|a| !a.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| DvrError::InvalidVolume(format!("expected key=value, got '{kv}'")))?;
            let bad = |_| DvrError::InvalidVolume(format!("bad value for {k}: '{v}'"));
            match k {
                "dims" => dims = v.parse().map_err(bad)?,
                "wobble" => wobble = v.parse().map_err(|_| DvrError::InvalidVolume(format!("bad wobble '{v}'")))?,
                _ => return Err(DvrError::InvalidVolume(format!("unknown volume parameter '{k}'"))),
            }
        }
        match name {
            "shells" => Ok(VolumeSpec::Shells { dims, wobble }),
            "ml" => Ok(VolumeSpec::Ml { dims }),
            "vortex" => Ok(VolumeSpec::Vortex { dims }),
            _ if Path::new(s).exists() => Ok(VolumeSpec::Raw { path: s.to_string() }),
            _ => Err(DvrError::InvalidVolume(format!("unknown volume '{s}'"))),
        }
    }

    pub fn build(&self) -> Result<Volume> {
        match self {
            VolumeSpec::Shells { dims, wobble } => {
                let w = *wobble;
                Volume::from_fn(*dims, |x, y, z| {
                    let r = (x * x + y * y + z * z).sqrt();
                    let theta = y.atan2(x);
                    let bump = 1.0 + w * (3.0 * theta).sin() * (2.5 * z).cos();
                    (1.0 - r * bump).clamp(0.0, 1.0)
                })
            }
            VolumeSpec::Ml { dims } => Volume::from_fn(*dims, |x, y, z| {
                let alpha = 0.25;
                let fm = 6.0;
                let rr = (x * x + y * y).sqrt();
                let rho = (2.0 * PI * fm * (PI * rr / 2.0).cos()).cos();
                (1.0 - (PI * z / 2.0).sin() + alpha * (1.0 + rho)) / (2.0 * (1.0 + alpha))
            }),
            VolumeSpec::Vortex { dims } => Volume::from_fn(*dims, |x, y, z| {
                let r = (x * x + y * y).sqrt();
                let swirl = y.atan2(x) + 2.0 * z;
                let core = (-4.0 * r * r).exp();
                (0.5 * core + 0.5 * core * (3.0 * swirl).sin() * (1.0 - z * z)).clamp(0.0, 1.0)
            }),
            VolumeSpec::Raw { path } => Volume::load_raw(path),
        }
    }
}

impl Volume {
    /// Samples `f` on a `dims^3` grid spanning `[-1, 1]^3`.
    pub fn from_fn(dims: usize, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        if dims < 2 {
            return Err(DvrError::InvalidVolume(format!("dims {dims} < 2")));
        }
        let h = 2.0 / (dims - 1) as f64;
        let mut values = Vec::with_capacity(dims * dims * dims);
        for k in 0..dims {
            for j in 0..dims {
                for i in 0..dims {
                    let p = [i, j, k].map(|v| -1.0 + v as f64 * h);
                    values.push(f(p[0], p[1], p[2]) as f32);
                }
            }
        }
        Volume::new([dims; 3], [h; 3], values)
    }

    pub fn new(dims: [usize; 3], spacing: [f64; 3], values: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(DvrError::InvalidVolume(format!("dims {dims:?} must be >= 2")));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(DvrError::InvalidVolume(format!(
                "{} values for dims {dims:?}",
                values.len()
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(DvrError::InvalidVolume(format!("spacing {spacing:?}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DvrError::InvalidVolume("non-finite value".into()));
        }
        Ok(Volume { dims, spacing, values })
    }

    fn load_raw(path: &str) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let sidecar: RawSidecar = serde_json::from_slice(&std::fs::read(format!("{path}.json"))?)?;
        if bytes.len() % 4 != 0 {
            return Err(DvrError::InvalidVolume(format!("{path}: length not a multiple of 4")));
        }
        let mut values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        if hi > lo {
            values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
        }
        let d = sidecar.dims;
        let spacing = sidecar.spacing.unwrap_or_else(|| {
            let longest = d.iter().copied().max().unwrap_or(2) as f64 - 1.0;
            [2.0 / longest; 3]
        });
        Volume::new(d, spacing, values)
    }

    pub fn half_extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| 0.5 * (self.dims[a] - 1) as f64 * self.spacing[a])
    }

    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        let h = self.half_extent();
        (h.map(|v| -v), h)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.dims[1] + j) * self.dims[0] + i] as f64
    }

    /// Trilinear interpolation; positions outside the grid clamp to the border.
    pub fn sample(&self, p: [f64; 3]) -> f64 {
        let h = self.half_extent();
        let mut idx = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let g = ((p[a] + h[a]) / self.spacing[a]).clamp(0.0, (self.dims[a] - 1) as f64);
            let i = (g.floor() as usize).min(self.dims[a] - 2);
            idx[a] = i;
            frac[a] = g - i as f64;
        }
        let [i, j, k] = idx;
        let [fx, fy, fz] = frac;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(self.at(i, j, k), self.at(i + 1, j, k), fx);
        let c10 = lerp(self.at(i, j + 1, k), self.at(i + 1, j + 1, k), fx);
        let c01 = lerp(self.at(i, j, k + 1), self.at(i + 1, j, k + 1), fx);
        let c11 = lerp(self.at(i, j + 1, k + 1), self.at(i + 1, j + 1, k + 1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }

    /// Central-difference gradient with one-voxel offsets.
    pub fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for a in 0..3 {
            let mut hi = p;
            let mut lo = p;
            hi[a] += self.spacing[a];
            lo[a] -= self.spacing[a];
            g[a] = (self.sample(hi) - self.sample(lo)) / (2.0 * self.spacing[a]);
        }
        g
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let h = self.half_extent();
        (0..3).all(|a| p[a].abs() <= h[a])
    }
}
