//! Composition by primitive concatenation and non-destructive edits.

use serde::{Deserialize, Serialize};
use volsplat_core::gaussian::normalize_quat;
use volsplat_core::math::{clamp01, sigmoid};
use volsplat_core::shading::{map_terms, LightConfig, TermTransform};

use crate::error::{Result, SceneError};
use crate::model::{Appearance, BasicSceneModel, Stage};
use crate::vq::QuantizedModel;

fn one() -> f32 {
    1.0
}

/// Edits of one basic scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEdit {
    /// Replaces the trained palette color when set.
    #[serde(default)]
    pub palette: Option<[f32; 3]>,
    /// Multiplies the mapped opacity (result clamped to `[0, 1]`).
    #[serde(default = "one")]
    pub opacity_scale: f32,
}

impl Default for SceneEdit {
    fn default() -> Self {
        SceneEdit {
            palette: None,
            opacity_scale: 1.0,
        }
    }
}

/// Per-scene edits plus the global light. The light's `term_scales` and
/// `term_bias` form the shading transform `k' = scale * k + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditState {
    pub scenes: Vec<SceneEdit>,
    pub light: LightConfig,
    #[serde(default)]
    pub term_bias: [f64; 4],
}

impl EditState {
    pub fn identity(scenes: usize, light: LightConfig) -> Self {
        EditState {
            scenes: vec![SceneEdit::default(); scenes],
            light,
            term_bias: [0.0; 4],
        }
    }

    pub fn validate(&self, scenes: usize) -> Result<()> {
        if self.scenes.len() != scenes {
            return Err(SceneError::InvalidEdit(format!("{} scene edits for {scenes} scenes", self.scenes.len())));
        }
        for (i, e) in self.scenes.iter().enumerate() {
            if !(e.opacity_scale >= 0.0) || !e.opacity_scale.is_finite() {
                return Err(SceneError::InvalidEdit(format!("scene {i}: opacity scale {}", e.opacity_scale)));
            }
            if let Some(p) = e.palette {
                if p.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return Err(SceneError::InvalidEdit(format!("scene {i}: palette {p:?} outside [0,1]")));
                }
            }
        }
        if self.term_bias.iter().any(|b| !b.is_finite()) {
            return Err(SceneError::InvalidEdit("non-finite term bias".into()));
        }
        self.light.validate().map_err(SceneError::InvalidEdit)
    }

    pub fn transform(&self) -> TermTransform<f32> {
        TermTransform {
            scale: self.light.term_scales.map(|v| v as f32),
            bias: self.term_bias.map(|v| v as f32),
        }
    }
}

/// Ordered editable models with their edit state.
#[derive(Clone, Debug, PartialEq)]
pub struct ComposedScene {
    pub models: Vec<BasicSceneModel>,
    pub edits: EditState,
}

/// Concatenates editable models. The light defaults to the first model's
/// training light (headlight when unknown).
pub fn compose(models: Vec<BasicSceneModel>) -> Result<ComposedScene> {
    if models.is_empty() {
        return Err(SceneError::EmptyInput("no models to compose"));
    }
    if models.iter().any(|m| m.stage() != Stage::Editable) {
        return Err(SceneError::MixedStage);
    }
    for m in &models {
        m.validate()?;
    }
    let light = models[0].meta.light.unwrap_or_else(LightConfig::headlight);
    let edits = EditState::identity(models.len(), light);
    Ok(ComposedScene { models, edits })
}

/// Flattens composed scenes in order; edits and the first scene's light carry over.
pub fn compose_scenes(scenes: Vec<ComposedScene>) -> Result<ComposedScene> {
    let Some(first) = scenes.first() else {
        return Err(SceneError::EmptyInput("no scenes to compose"));
    };
    let light = first.edits.light;
    let term_bias = first.edits.term_bias;
    let mut models = Vec::new();
    let mut edits = Vec::new();
    for s in scenes {
        models.extend(s.models);
        edits.extend(s.edits.scenes);
    }
    Ok(ComposedScene {
        models,
        edits: EditState {
            scenes: edits,
            light,
            term_bias,
        },
    })
}

impl ComposedScene {
    pub fn len(&self) -> usize {
        self.models.iter().map(BasicSceneModel::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scene_count(&self) -> usize {
        self.models.len()
    }

    /// Palette currently in effect for scene `i`.
    pub fn palette(&self, i: usize) -> [f32; 3] {
        self.edits.scenes[i].palette.unwrap_or(self.models[i].palette)
    }

    /// Scene bounds: union of the model boxes, else of the positions.
    pub fn bbox(&self) -> [[f64; 3]; 2] {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut grow = |p: [f64; 3]| {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        };
        for m in &self.models {
            match m.meta.bbox {
                Some([a, b]) => {
                    grow(a);
                    grow(b);
                }
                None => m.geometry.mu.iter().for_each(|p| grow(p.map(|v| v as f64))),
            }
        }
        if lo[0] > hi[0] {
            return [[-1.0; 3], [1.0; 3]];
        }
        [lo, hi]
    }

    pub fn center(&self) -> [f64; 3] {
        let [lo, hi] = self.bbox();
        [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]))
    }
}

/// Per-primitive appearance after edits.
#[derive(Clone, Debug, PartialEq)]
pub enum EffectiveAppearance {
    Sh {
        degree: usize,
        coeffs: Vec<[f32; 3]>,
    },
    Shading {
        /// Effective palette per scene.
        palettes: Vec<[f32; 3]>,
        offset: Vec<[f32; 3]>,
        /// Mapped `(k_a, k_d, k_s, beta)` before the shading transform.
        terms: Vec<[f32; 4]>,
        transform: TermTransform<f32>,
    },
}

/// Render-ready snapshot: mapped attributes, per-primitive scene tags.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveScene {
    pub mu: Vec<[f32; 3]>,
    /// Unit quaternions.
    pub rotation: Vec<[f32; 4]>,
    pub scale: Vec<[f32; 3]>,
    pub opacity: Vec<f32>,
    pub normal: Vec<[f32; 3]>,
    pub scene_id: Vec<u32>,
    pub appearance: EffectiveAppearance,
    pub light: LightConfig,
}

impl EffectiveScene {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn scene_count(&self) -> usize {
        match &self.appearance {
            EffectiveAppearance::Shading { palettes, .. } => palettes.len(),
            EffectiveAppearance::Sh { .. } => 1,
        }
    }

    /// Unedited view of a single model (either stage).
    pub fn from_model(model: &BasicSceneModel, light: LightConfig) -> Result<Self> {
        model.validate()?;
        let g = &model.geometry;
        let appearance = match &model.appearance {
            Appearance::Sh { degree, coeffs } => EffectiveAppearance::Sh {
                degree: *degree,
                coeffs: coeffs.clone(),
            },
            Appearance::Shading { offset, terms } => EffectiveAppearance::Shading {
                palettes: vec![model.palette],
                offset: offset.clone(),
                terms: terms.iter().map(|&t| map_terms(t)).collect(),
                transform: TermTransform::default(),
            },
        };
        Ok(EffectiveScene {
            mu: g.mu.clone(),
            rotation: g.rotation.iter().map(|&q| normalize_quat(q)).collect(),
            scale: g.scales(),
            opacity: g.opacities(),
            normal: g.normal.clone(),
            scene_id: vec![0; g.len()],
            appearance,
            light,
        })
    }

    /// Reads attributes straight from the codebooks (no intermediate model).
    pub fn from_quantized(q: &QuantizedModel, light: LightConfig) -> Result<Self> {
        q.validate()?;
        let n = q.len();
        let attr = |name: &str| q.attribute(name).expect("validated attribute set");
        let (rot, sc, op, off) = (attr("rotation"), attr("scale"), attr("opacity"), attr("offset"));
        let k = [attr("k_a"), attr("k_d"), attr("k_s"), attr("beta")];
        let mut rotation = Vec::with_capacity(n);
        let mut scale = Vec::with_capacity(n);
        let mut opacity = Vec::with_capacity(n);
        let mut offset = Vec::with_capacity(n);
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let q4 = [rot.value(4 * i)?, rot.value(4 * i + 1)?, rot.value(4 * i + 2)?, rot.value(4 * i + 3)?];
            rotation.push(normalize_quat(q4));
            scale.push([sc.value(3 * i)?.exp(), sc.value(3 * i + 1)?.exp(), sc.value(3 * i + 2)?.exp()]);
            opacity.push(sigmoid(op.value(i)?));
            offset.push([off.value(3 * i)?, off.value(3 * i + 1)?, off.value(3 * i + 2)?]);
            terms.push(map_terms([k[0].value(i)?, k[1].value(i)?, k[2].value(i)?, k[3].value(i)?]));
        }
        Ok(EffectiveScene {
            mu: q.mu.clone(),
            rotation,
            scale,
            opacity,
            normal: q.normal.clone(),
            scene_id: vec![0; n],
            appearance: EffectiveAppearance::Shading {
                palettes: vec![q.palette],
                offset,
                terms,
                transform: TermTransform::default(),
            },
            light,
        })
    }
}

/// Applies the edit state to the concatenated primitives. Pure: the models
/// are never modified.
pub fn apply_edits(scene: &ComposedScene) -> Result<EffectiveScene> {
    scene.edits.validate(scene.scene_count())?;
    if scene.models.iter().any(|m| m.stage() != Stage::Editable) {
        return Err(SceneError::MixedStage);
    }
    let n = scene.len();
    let mut out = EffectiveScene {
        mu: Vec::with_capacity(n),
        rotation: Vec::with_capacity(n),
        scale: Vec::with_capacity(n),
        opacity: Vec::with_capacity(n),
        normal: Vec::with_capacity(n),
        scene_id: Vec::with_capacity(n),
        appearance: EffectiveAppearance::Sh {
            degree: 0,
            coeffs: vec![],
        },
        light: scene.edits.light,
    };
    let mut offsets = Vec::with_capacity(n);
    let mut terms_all = Vec::with_capacity(n);
    let mut palettes = Vec::with_capacity(scene.scene_count());
    for (sid, (m, e)) in scene.models.iter().zip(&scene.edits.scenes).enumerate() {
        let g = &m.geometry;
        let Appearance::Shading { offset, terms } = &m.appearance else {
            unreachable!("stage checked above")
        };
        out.mu.extend_from_slice(&g.mu);
        out.rotation.extend(g.rotation.iter().map(|&q| normalize_quat(q)));
        out.scale.extend(g.scales());
        if e.opacity_scale == 1.0 {
            out.opacity.extend(g.opacities());
        } else {
            out.opacity.extend(g.opacities().into_iter().map(|o| clamp01(e.opacity_scale * o)));
        }
        out.normal.extend_from_slice(&g.normal);
        out.scene_id.extend(std::iter::repeat_n(sid as u32, g.len()));
        offsets.extend_from_slice(offset);
        terms_all.extend(terms.iter().map(|&t| map_terms(t)));
        palettes.push(e.palette.unwrap_or(m.palette));
    }
    out.appearance = EffectiveAppearance::Shading {
        palettes,
        offset: offsets,
        terms: terms_all,
        transform: scene.edits.transform(),
    };
    Ok(out)
}
