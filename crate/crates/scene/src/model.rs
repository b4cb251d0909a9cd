//! In-memory splat models. Attributes are stored in their unconstrained
//! optimizer form (log scales, opacity logits, raw shading terms).

use serde::{Deserialize, Serialize};
use volsplat_core::math::sigmoid;
use volsplat_core::sh::coeff_count;
use volsplat_core::shading::{map_terms, LightConfig};

use crate::error::{Result, SceneError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Base,
    Editable,
}

/// Geometry shared by both stages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Geometry {
    pub mu: Vec<[f32; 3]>,
    /// Quaternion `(w, x, y, z)`, renormalized wherever it is consumed.
    pub rotation: Vec<[f32; 4]>,
    pub log_scale: Vec<[f32; 3]>,
    pub opacity_logit: Vec<f32>,
    pub normal: Vec<[f32; 3]>,
}

impl Geometry {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn scales(&self) -> Vec<[f32; 3]> {
        self.log_scale.iter().map(|s| s.map(f32::exp)).collect()
    }

    pub fn opacities(&self) -> Vec<f32> {
        self.opacity_logit.iter().map(|&o| sigmoid(o)).collect()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.mu.len();
        let lens = [self.rotation.len(), self.log_scale.len(), self.opacity_logit.len(), self.normal.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(SceneError::ShapeMismatch(format!("geometry arrays {n} vs {lens:?}")));
        }
        Ok(())
    }

    pub fn extend_from(&mut self, other: &Geometry) {
        self.mu.extend_from_slice(&other.mu);
        self.rotation.extend_from_slice(&other.rotation);
        self.log_scale.extend_from_slice(&other.log_scale);
        self.opacity_logit.extend_from_slice(&other.opacity_logit);
        self.normal.extend_from_slice(&other.normal);
    }

    /// Keeps primitives where `keep[i]` holds.
    pub fn retain(&mut self, keep: &[bool]) {
        fn filter<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        filter(&mut self.mu, keep);
        filter(&mut self.rotation, keep);
        filter(&mut self.log_scale, keep);
        filter(&mut self.opacity_logit, keep);
        filter(&mut self.normal, keep);
    }
}

/// Stage-dependent color parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Appearance {
    /// `coeff_count(degree)` rgb triples per primitive.
    Sh { degree: usize, coeffs: Vec<[f32; 3]> },
    /// Offset color and raw `(k_a, k_d, k_s, beta)` (see [`map_terms`]).
    Shading { offset: Vec<[f32; 3]>, terms: Vec<[f32; 4]> },
}

impl Appearance {
    pub fn stage(&self) -> Stage {
        match self {
            Appearance::Sh { .. } => Stage::Base,
            Appearance::Shading { .. } => Stage::Editable,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Appearance::Sh { degree, coeffs } => coeffs.len() / coeff_count(*degree),
            Appearance::Shading { offset, .. } => offset.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, n: usize) -> Result<()> {
        let ok = match self {
            Appearance::Sh { degree, coeffs } => *degree <= 3 && coeffs.len() == n * coeff_count(*degree),
            Appearance::Shading { offset, terms } => offset.len() == n && terms.len() == n,
        };
        if ok {
            Ok(())
        } else {
            Err(SceneError::ShapeMismatch(format!("appearance arrays for {n} primitives")))
        }
    }

    pub fn retain(&mut self, keep: &[bool]) {
        match self {
            Appearance::Sh { degree, coeffs } => {
                let k = coeff_count(*degree);
                *coeffs = coeffs
                    .chunks(k)
                    .zip(keep)
                    .filter(|(_, &kp)| kp)
                    .flat_map(|(c, _)| c.iter().copied())
                    .collect();
            }
            Appearance::Shading { offset, terms } => {
                let mut i = 0;
                offset.retain(|_| {
                    i += 1;
                    keep[i - 1]
                });
                let mut i = 0;
                terms.retain(|_| {
                    i += 1;
                    keep[i - 1]
                });
            }
        }
    }
}

/// Descriptive metadata stored as JSON alongside the arrays.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default)]
    pub name: String,
    /// Transfer-function descriptor of the basic scene, opaque to this crate.
    #[serde(default)]
    pub tf: serde_json::Value,
    #[serde(default)]
    pub light: Option<LightConfig>,
    /// Scene bounds `[min, max]`.
    #[serde(default)]
    pub bbox: Option<[[f64; 3]; 2]>,
    #[serde(default)]
    pub info: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasicSceneModel {
    pub geometry: Geometry,
    pub appearance: Appearance,
    /// Shared palette color `c_p`.
    pub palette: [f32; 3],
    pub meta: ModelMeta,
}

impl BasicSceneModel {
    pub fn stage(&self) -> Stage {
        self.appearance.stage()
    }

    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.check()?;
        self.appearance.check(self.geometry.len())
    }

    /// Empty editable model (renders black).
    pub fn empty(palette: [f32; 3]) -> Self {
        BasicSceneModel {
            geometry: Geometry::default(),
            appearance: Appearance::Shading {
                offset: vec![],
                terms: vec![],
            },
            palette,
            meta: ModelMeta::default(),
        }
    }

    /// Mapped `(k_a, k_d, k_s, beta)` per primitive (editable stage only).
    pub fn mapped_terms(&self) -> Option<Vec<[f32; 4]>> {
        match &self.appearance {
            Appearance::Shading { terms, .. } => Some(terms.iter().map(|&t| map_terms(t)).collect()),
            Appearance::Sh { .. } => None,
        }
    }
}
