//! Optimizer-side splat state: one Adam group per attribute.

use volsplat_core::gaussian::normalize_quat;
use volsplat_core::sh::coeff_count;
use volsplat_core::shading::beta_to_raw;
use volsplat_scene::{Appearance, BasicSceneModel, Geometry, ModelMeta};

use crate::adam::Param;

/// Higher-order SH coefficients per primitive (15 rgb triples).
pub const SH_REST: usize = 45;

#[derive(Clone, Debug)]
pub enum Colors {
    Sh { dc: Param<3>, rest: Param<SH_REST> },
    Shading { offset: Param<3>, terms: Param<4> },
}

#[derive(Clone, Debug)]
pub struct Splats {
    pub mu: Param<3>,
    pub rotation: Param<4>,
    pub log_scale: Param<3>,
    pub opacity: Param<1>,
    pub normal: Param<3>,
    pub colors: Colors,
    pub palette: [f32; 3],
}

/// Gradients laid out like [`Splats`].
#[derive(Clone, Debug)]
pub struct Grads {
    pub mu: Vec<[f32; 3]>,
    pub rotation: Vec<[f32; 4]>,
    pub log_scale: Vec<[f32; 3]>,
    pub opacity: Vec<[f32; 1]>,
    pub normal: Vec<[f32; 3]>,
    pub colors: ColorGrads,
}

#[derive(Clone, Debug)]
pub enum ColorGrads {
    Sh { dc: Vec<[f32; 3]>, rest: Vec<[f32; SH_REST]> },
    Shading { offset: Vec<[f32; 3]>, terms: Vec<[f32; 4]> },
}

/// Raw shading terms of a fresh editable splat: `k_a = k_d = k_s = 0.5`, `beta = 10`.
pub fn neutral_terms() -> [f32; 4] {
    [0.0, 0.0, 0.0, beta_to_raw(10.0) as f32]
}

impl Splats {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn is_editable(&self) -> bool {
        matches!(self.colors, Colors::Shading { .. })
    }

    /// Loads any model; SH coefficients are padded to degree 3.
    pub fn from_model(model: &BasicSceneModel) -> Self {
        let g = &model.geometry;
        let colors = match &model.appearance {
            Appearance::Sh { degree, coeffs } => {
                let k = coeff_count(*degree);
                let mut dc = Vec::with_capacity(g.len());
                let mut rest = Vec::with_capacity(g.len());
                for c in coeffs.chunks(k) {
                    dc.push(c[0]);
                    let mut r = [0.0f32; SH_REST];
                    for (j, t) in c[1..].iter().enumerate() {
                        r[3 * j..3 * j + 3].copy_from_slice(t);
                    }
                    rest.push(r);
                }
                Colors::Sh {
                    dc: Param::new(dc),
                    rest: Param::new(rest),
                }
            }
            Appearance::Shading { offset, terms } => Colors::Shading {
                offset: Param::new(offset.clone()),
                terms: Param::new(terms.clone()),
            },
        };
        Splats {
            mu: Param::new(g.mu.clone()),
            rotation: Param::new(g.rotation.clone()),
            log_scale: Param::new(g.log_scale.clone()),
            opacity: Param::new(g.opacity_logit.iter().map(|&o| [o]).collect()),
            normal: Param::new(g.normal.clone()),
            colors,
            palette: model.palette,
        }
    }

    /// Stage-2 start: geometry kept, SH dropped, neutral shading attributes.
    pub fn to_editable(&self, palette: [f32; 3]) -> Self {
        let n = self.len();
        let fresh = |p: &Param<3>| Param::new(p.value.clone());
        Splats {
            mu: fresh(&self.mu),
            rotation: Param::new(self.rotation.value.clone()),
            log_scale: fresh(&self.log_scale),
            opacity: Param::new(self.opacity.value.clone()),
            normal: fresh(&self.normal),
            colors: Colors::Shading {
                offset: Param::new(vec![[0.0; 3]; n]),
                terms: Param::new(vec![neutral_terms(); n]),
            },
            palette,
        }
    }

    /// SH coefficients of primitive `i` (degree 3 layout).
    pub fn sh_coeffs(&self, i: usize) -> Option<[[f32; 3]; 16]> {
        let Colors::Sh { dc, rest } = &self.colors else {
            return None;
        };
        let mut c = [[0.0f32; 3]; 16];
        c[0] = dc.value[i];
        for j in 0..15 {
            c[j + 1].copy_from_slice(&rest.value[i][3 * j..3 * j + 3]);
        }
        Some(c)
    }

    pub fn to_model(&self, sh_degree: usize, meta: ModelMeta) -> BasicSceneModel {
        let geometry = Geometry {
            mu: self.mu.value.clone(),
            rotation: self.rotation.value.clone(),
            log_scale: self.log_scale.value.clone(),
            opacity_logit: self.opacity.value.iter().map(|o| o[0]).collect(),
            normal: self.normal.value.clone(),
        };
        let appearance = match &self.colors {
            Colors::Sh { .. } => {
                let k = coeff_count(sh_degree);
                let mut coeffs = Vec::with_capacity(self.len() * k);
                for i in 0..self.len() {
                    coeffs.extend_from_slice(&self.sh_coeffs(i).expect("sh colors")[..k]);
                }
                Appearance::Sh {
                    degree: sh_degree,
                    coeffs,
                }
            }
            Colors::Shading { offset, terms } => Appearance::Shading {
                offset: offset.value.clone(),
                terms: terms.value.clone(),
            },
        };
        BasicSceneModel {
            geometry,
            appearance,
            palette: self.palette,
            meta,
        }
    }

    pub fn zero_grads(&self) -> Grads {
        let n = self.len();
        Grads {
            mu: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            log_scale: vec![[0.0; 3]; n],
            opacity: vec![[0.0]; n],
            normal: vec![[0.0; 3]; n],
            colors: match self.colors {
                Colors::Sh { .. } => ColorGrads::Sh {
                    dc: vec![[0.0; 3]; n],
                    rest: vec![[0.0; SH_REST]; n],
                },
                Colors::Shading { .. } => ColorGrads::Shading {
                    offset: vec![[0.0; 3]; n],
                    terms: vec![[0.0; 4]; n],
                },
            },
        }
    }

    pub fn retain(&mut self, keep: &[bool]) {
        self.mu.retain(keep);
        self.rotation.retain(keep);
        self.log_scale.retain(keep);
        self.opacity.retain(keep);
        self.normal.retain(keep);
        match &mut self.colors {
            Colors::Sh { dc, rest } => {
                dc.retain(keep);
                rest.retain(keep);
            }
            Colors::Shading { offset, terms } => {
                offset.retain(keep);
                terms.retain(keep);
            }
        }
    }

    /// Appends a copy of primitive `i` with position `mu` and log scale
    /// `log_scale`; moments start at zero.
    pub fn push_copy(&mut self, i: usize, mu: [f32; 3], log_scale: [f32; 3]) {
        self.mu.push(mu);
        self.rotation.push(self.rotation.value[i]);
        self.log_scale.push(log_scale);
        self.opacity.push(self.opacity.value[i]);
        self.normal.push(self.normal.value[i]);
        match &mut self.colors {
            Colors::Sh { dc, rest } => {
                dc.push(dc.value[i]);
                rest.push(rest.value[i]);
            }
            Colors::Shading { offset, terms } => {
                offset.push(offset.value[i]);
                terms.push(terms.value[i]);
            }
        }
    }

    pub fn renormalize_rotations(&mut self) {
        for q in &mut self.rotation.value {
            *q = normalize_quat(*q);
        }
    }
}
