mod common;

use common::*;
use volsplat_core::raster::ExecMode;
use volsplat_core::shading::LightConfig;
use volsplat_scene::render::{render_attributes, render_mode, Attribute, RenderMode};
use volsplat_scene::{apply_edits, compose, BasicSceneModel, EffectiveScene, SceneError};

const SEQ: ExecMode = ExecMode::Sequential;

#[test]
fn ones_map_equals_alpha() {
    let m = random_editable(1, 200, [0.0; 3]);
    let eff = EffectiveScene::from_model(&m, LightConfig::headlight()).unwrap();
    let maps = render_attributes(&eff, &camera(48), &[Attribute::Ones, Attribute::Ka], false, false, SEQ).unwrap();
    // sum T_i a_i and 1 - prod(1 - a_i) telescope; they differ only by f32 rounding
    let ones = maps.get(Attribute::Ones).unwrap();
    let worst = ones.iter().zip(&maps.alpha).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn unknown_attributes_are_errors() {
    assert!("k_q".parse::<Attribute>().is_err());
    assert_eq!("scene:3".parse::<Attribute>().unwrap(), Attribute::Scene(3));
    let base = random_base(2, 30, 1);
    let eff = EffectiveScene::from_model(&base, LightConfig::headlight()).unwrap();
    let err = render_attributes(&eff, &camera(16), &[Attribute::Ambient], false, false, SEQ).unwrap_err();
    assert!(matches!(err, SceneError::Core(volsplat_core::CoreError::UnknownAttribute(_))));
    assert!(render_attributes(&eff, &camera(16), &[Attribute::Rgb], true, true, SEQ).is_ok());
}

#[test]
fn shaded_map_is_the_sum_of_term_maps() {
    let a = random_editable(3, 300, [0.1, 0.0, 0.0]);
    let b = random_editable(4, 300, [-0.1, 0.0, 0.0]);
    for light in [LightConfig::headlight(), LightConfig::orbital(-0.4, 2.5)] {
        let mut s = compose(vec![a.clone(), b.clone()]).unwrap();
        s.edits.light = light;
        let eff = apply_edits(&s).unwrap();
        let attrs = [Attribute::Rgb, Attribute::Ambient, Attribute::Diffuse, Attribute::Specular];
        let maps = render_attributes(&eff, &camera(64), &attrs, false, false, ExecMode::Parallel).unwrap();
        let rgb = maps.get(Attribute::Rgb).unwrap();
        let (am, di, sp) = (
            maps.get(Attribute::Ambient).unwrap(),
            maps.get(Attribute::Diffuse).unwrap(),
            maps.get(Attribute::Specular).unwrap(),
        );
        let worst = (0..rgb.len()).map(|k| (rgb[k] - (am[k] + di[k] + sp[k])).abs()).fold(0.0f32, f32::max);
        assert!(worst <= 1e-5, "{worst}");
    }
}

#[test]
fn ambient_map_ignores_the_light() {
    let m = random_editable(5, 300, [0.0; 3]);
    let mut s = compose(vec![m]).unwrap();
    let cam = camera(48);
    let attrs = [Attribute::Ambient, Attribute::Diffuse, Attribute::Specular];
    let head = render_attributes(&apply_edits(&s).unwrap(), &cam, &attrs, false, false, SEQ).unwrap();
    s.edits.light = LightConfig::orbital(0.0, std::f64::consts::FRAC_PI_4);
    let orb = render_attributes(&apply_edits(&s).unwrap(), &cam, &attrs, false, false, SEQ).unwrap();
    assert_eq!(bits(head.get(Attribute::Ambient).unwrap()), bits(orb.get(Attribute::Ambient).unwrap()));
    assert_ne!(bits(head.get(Attribute::Diffuse).unwrap()), bits(orb.get(Attribute::Diffuse).unwrap()));
    assert_ne!(bits(head.get(Attribute::Specular).unwrap()), bits(orb.get(Attribute::Specular).unwrap()));
}

#[test]
fn every_mode_renders_valid_images() {
    let m = random_editable(6, 200, [0.0; 3]);
    let eff = EffectiveScene::from_model(&m, LightConfig::headlight()).unwrap();
    for mode in RenderMode::ALL {
        let img = render_mode(&eff, &camera(32), mode, SEQ).unwrap();
        assert_eq!(img.data.len(), 32 * 32 * 4);
        for p in img.data.chunks(4) {
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "{mode}: {p:?}");
            assert!(p[..3].iter().all(|&c| c <= p[3]), "{mode}: {p:?}");
        }
        assert_eq!(mode.name().parse::<RenderMode>().unwrap(), mode);
    }
}

#[test]
fn empty_model_alpha_mode_is_black() {
    let eff = EffectiveScene::from_model(&BasicSceneModel::empty([0.5; 3]), LightConfig::headlight()).unwrap();
    let img = render_mode(&eff, &camera(16), RenderMode::Alpha, SEQ).unwrap();
    assert!(img.data.chunks(4).all(|p| p == [0.0, 0.0, 0.0, 1.0]));
    let shaded = render_mode(&eff, &camera(16), RenderMode::Shaded, SEQ).unwrap();
    assert!(shaded.data.iter().all(|&v| v == 0.0));
}

#[test]
fn parallel_and_sequential_renders_agree() {
    let m = random_editable(7, 500, [0.0; 3]);
    let eff = EffectiveScene::from_model(&m, LightConfig::headlight()).unwrap();
    let a = render_mode(&eff, &camera(64), RenderMode::Shaded, SEQ).unwrap();
    let b = render_mode(&eff, &camera(64), RenderMode::Shaded, ExecMode::Parallel).unwrap();
    assert_eq!(bits(&a.data), bits(&b.data));
}
