mod common;

use common::*;
use volsplat_core::raster::ExecMode;
use volsplat_core::render::{render, RenderSettings, SplatGeometry};
use volsplat_core::shading::{shade, LightConfig, SplatShading, TermTransform};
use volsplat_scene::compose::compose_scenes;
use volsplat_scene::render::{render_attributes, render_image, Attribute};
use volsplat_scene::{apply_edits, compose, Appearance, BasicSceneModel, EffectiveScene, SceneError};

const SEQ: ExecMode = ExecMode::Sequential;

fn pair() -> (BasicSceneModel, BasicSceneModel) {
    (random_editable(11, 150, [0.25, 0.0, 0.0]), random_editable(12, 120, [-0.25, 0.0, 0.1]))
}

/// Independent path: concatenate raw arrays, shade each splat with its own
/// palette and composite in one rasterizer call.
fn union_render(models: &[&BasicSceneModel], light: LightConfig, cam: &volsplat_core::Camera) -> Vec<f32> {
    let (mut mu, mut rot, mut sc, mut op, mut feat, mut normals) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    let l = light.light::<f32>();
    let cam_pos = cam.position.map(|v| v as f32);
    for m in models {
        let g = &m.geometry;
        let Appearance::Shading { offset, terms } = &m.appearance else { panic!() };
        for i in 0..m.len() {
            mu.push(g.mu[i]);
            rot.push(volsplat_core::gaussian::normalize_quat(g.rotation[i]));
            sc.push(g.log_scale[i].map(f32::exp));
            op.push(volsplat_core::math::sigmoid(g.opacity_logit[i]));
            normals.push(g.normal[i]);
            let s = SplatShading {
                palette: m.palette,
                offset: offset[i],
                terms: volsplat_core::shading::map_terms(terms[i]),
                normal: g.normal[i],
                mu: g.mu[i],
            };
            feat.extend(shade(&s, &l, &TermTransform::default(), cam_pos).rgb());
        }
    }
    let geom = SplatGeometry { mu: &mu, rotation: &rot, scale: &sc, opacity: &op };
    let settings = RenderSettings { depth: false, normals: false, mode: SEQ };
    let (out, _) = render(&geom, &feat, 3, Some(&normals), cam, &settings).unwrap();
    out.features
}

fn rgb_map(scene: &EffectiveScene, cam: &volsplat_core::Camera) -> Vec<f32> {
    render_attributes(scene, cam, &[Attribute::Rgb], false, false, SEQ).unwrap().maps.remove(0).1
}

#[test]
fn composition_counts_and_single_identity() {
    let (a, b) = pair();
    let both = compose(vec![a.clone(), b.clone()]).unwrap();
    assert_eq!(both.len(), a.len() + b.len());
    let eff = apply_edits(&both).unwrap();
    assert_eq!(eff.scene_id.iter().filter(|&&s| s == 0).count(), a.len());
    assert!(eff.scene_id.windows(2).all(|w| w[0] <= w[1]));

    let cam = camera(48);
    let light = LightConfig::headlight();
    let single = apply_edits(&compose(vec![a.clone()]).unwrap()).unwrap();
    let direct = EffectiveScene::from_model(&a, light).unwrap();
    assert_eq!(single, direct);
    assert_eq!(bits(&rgb_map(&single, &cam)), bits(&rgb_map(&direct, &cam)));
}

#[test]
fn composed_render_equals_union_list_render() {
    let (a, b) = pair();
    let cam = camera(64);
    let light = LightConfig::headlight();
    let eff = apply_edits(&compose(vec![a.clone(), b.clone()]).unwrap()).unwrap();
    assert_eq!(bits(&rgb_map(&eff, &cam)), bits(&union_render(&[&a, &b], light, &cam)));
}

#[test]
fn composition_is_associative() {
    let (a, b) = pair();
    let c = random_editable(13, 90, [0.0, 0.3, -0.2]);
    let cam = camera(48);
    let ab = compose(vec![a.clone(), b.clone()]).unwrap();
    let nested = compose_scenes(vec![ab, compose(vec![c.clone()]).unwrap()]).unwrap();
    let flat = compose(vec![a, b, c]).unwrap();
    assert_eq!(nested, flat);
    let x = rgb_map(&apply_edits(&nested).unwrap(), &cam);
    let y = rgb_map(&apply_edits(&flat).unwrap(), &cam);
    assert_eq!(bits(&x), bits(&y));
}

#[test]
fn base_models_cannot_be_composed() {
    let (a, _) = pair();
    assert!(matches!(compose(vec![a, random_base(1, 5, 1)]), Err(SceneError::MixedStage)));
    assert!(matches!(compose(vec![]), Err(SceneError::EmptyInput(_))));
}

#[test]
fn zero_opacity_scale_hides_a_scene() {
    let (a, b) = pair();
    let cam = camera(48);
    let mut s = compose(vec![a.clone(), b]).unwrap();
    s.edits.scenes[1].opacity_scale = 0.0;
    let hidden = apply_edits(&s).unwrap();
    let only_a = EffectiveScene::from_model(&a, s.edits.light).unwrap();
    let x = rgb_map(&hidden, &cam);
    let y = rgb_map(&only_a, &cam);
    let worst = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn identity_edits_keep_originals() {
    let (a, b) = pair();
    let s = compose(vec![a.clone(), b.clone()]).unwrap();
    let eff = apply_edits(&s).unwrap();
    assert_eq!(eff.opacity[..a.len()], a.geometry.opacities()[..]);
    assert_eq!(s.models, vec![a, b]);
}

#[test]
fn recolor_scales_color_linearly_without_offset_or_specular() {
    let (mut a, _) = pair();
    if let Appearance::Shading { offset, terms } = &mut a.appearance {
        offset.iter_mut().for_each(|o| *o = [0.0; 3]);
        terms.iter_mut().for_each(|t| t[2] = -80.0);
    }
    a.palette = [0.4, 0.3, 0.2];
    let cam = camera(32);
    let mut s = compose(vec![a]).unwrap();
    let base = volsplat_scene::render::shade_all(&apply_edits(&s).unwrap(), cam.position.map(|v| v as f32)).unwrap();
    s.edits.scenes[0].palette = Some([0.8, 0.6, 0.4]);
    let doubled = volsplat_scene::render::shade_all(&apply_edits(&s).unwrap(), cam.position.map(|v| v as f32)).unwrap();
    for (x, y) in base.iter().zip(&doubled) {
        for c in 0..3 {
            assert!((2.0 * (x.ambient[c] + x.diffuse[c]) - (y.ambient[c] + y.diffuse[c])).abs() < 1e-6);
        }
        assert!(y.specular < 1e-20);
    }
}

#[test]
fn palette_edit_is_local_to_its_scene() {
    let a = random_editable(21, 100, [0.55, 0.0, 0.0]);
    let b = random_editable(22, 100, [-0.55, 0.0, 0.0]);
    let cam = camera(64);
    let mut s = compose(vec![a, b]).unwrap();
    let before = render_attributes(&apply_edits(&s).unwrap(), &cam, &[Attribute::Rgb, Attribute::Scene(1)], false, false, SEQ).unwrap();
    s.edits.scenes[1].palette = Some([0.05, 0.95, 0.1]);
    let after = rgb_map(&apply_edits(&s).unwrap(), &cam);
    let weight = before.get(Attribute::Scene(1)).unwrap();
    let rgb = before.get(Attribute::Rgb).unwrap();
    let mut untouched = 0;
    for p in 0..weight.len() {
        if weight[p] == 0.0 {
            untouched += 1;
            assert_eq!(rgb[3 * p..3 * p + 3], after[3 * p..3 * p + 3], "pixel {p}");
        }
    }
    assert!(untouched > 100 && untouched < weight.len());
}

#[test]
fn edits_are_invertible() {
    let (a, b) = pair();
    let cam = camera(40);
    let mut s = compose(vec![a, b]).unwrap();
    let original = s.edits.clone();
    let img0 = render_image(&apply_edits(&s).unwrap(), &cam, SEQ).unwrap();
    s.edits.scenes[0].palette = Some([1.0, 0.0, 0.0]);
    s.edits.scenes[1].opacity_scale = 0.3;
    s.edits.light = LightConfig::orbital(0.5, 0.5);
    s.edits.light.term_scales = [1.5, 0.5, 2.0, 0.7];
    let img1 = render_image(&apply_edits(&s).unwrap(), &cam, SEQ).unwrap();
    assert_ne!(bits(&img0.data), bits(&img1.data));
    s.edits = original;
    let img2 = render_image(&apply_edits(&s).unwrap(), &cam, SEQ).unwrap();
    assert_eq!(bits(&img0.data), bits(&img2.data));
}

#[test]
fn invalid_edits_are_rejected() {
    let (a, _) = pair();
    let mut s = compose(vec![a]).unwrap();
    s.edits.scenes[0].opacity_scale = -1.0;
    assert!(matches!(apply_edits(&s), Err(SceneError::InvalidEdit(_))));
    s.edits.scenes[0].opacity_scale = 1.0;
    s.edits.scenes[0].palette = Some([1.5, 0.0, 0.0]);
    assert!(matches!(apply_edits(&s), Err(SceneError::InvalidEdit(_))));
}
