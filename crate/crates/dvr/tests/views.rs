use proptest::prelude::*;
use volsplat_core::math::{dot, sub};
use volsplat_core::RgbaImage;
use volsplat_dvr::views::{
    entropy_report, entropy_score, icosphere, icosphere_cameras, normalize_scores, rig_directions, views_for_scene,
};
use volsplat_dvr::DvrError;

/// Per-pixel summation straight from the definition.
fn entropy_oracle(images: &[RgbaImage]) -> f64 {
    let pixels: Vec<[f32; 4]> = images.iter().flat_map(|im| im.data.chunks(4).map(|p| [p[0], p[1], p[2], p[3]])).collect();
    let lum = |p: &[f32; 4]| ((0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]).clamp(0.0, 1.0) * 255.0).round() as i32;
    let alp = |p: &[f32; 4]| (p[3].clamp(0.0, 1.0) * 255.0).round() as i32;
    let n = pixels.len() as f64;
    let mut e = 0.0;
    for p in &pixels {
        let pc = pixels.iter().filter(|q| lum(q) == lum(p)).count() as f64 / n;
        let pa = pixels.iter().filter(|q| alp(q) == alp(p)).count() as f64 / n;
        e -= pc * pc.ln() + pa * pa.ln();
    }
    e
}

fn image_from(pixels: &[[f32; 4]], w: u32) -> RgbaImage {
    RgbaImage { width: w, height: pixels.len() as u32 / w, data: pixels.concat() }
}

#[test]
fn icosphere_camera_counts_and_radius() {
    for (level, count) in [(0, 12), (1, 42), (2, 162)] {
        let cams = icosphere_cameras(level, 3.5, [0.1, -0.2, 0.3], 0.6, 8, 8);
        assert_eq!(cams.len(), count);
        for c in &cams {
            let d = sub(c.position, [0.1, -0.2, 0.3]);
            assert!((dot(d, d).sqrt() - 3.5).abs() < 1e-9);
            assert!(c.validate().is_ok());
        }
    }
    for v in icosphere(2) {
        assert!((dot(v, v) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rig_of_92_is_distinct() {
    let dirs = rig_directions(92).unwrap();
    assert_eq!(dirs.len(), 92);
    for i in 0..dirs.len() {
        for j in 0..i {
            assert!(dot(dirs[i], dirs[j]) < 1.0 - 1e-12);
        }
    }
    assert_eq!(rig_directions(642).unwrap().len(), 642);
}

#[test]
fn constant_images_have_zero_entropy() {
    let img = image_from(&[[0.2, 0.3, 0.1, 0.7]; 16], 4);
    assert_eq!(entropy_score(&[img.clone(), img]).unwrap(), 0.0);
}

#[test]
fn transparent_images_have_only_a_color_term() {
    let px: Vec<[f32; 4]> = (0..16).map(|i| [(i % 4) as f32 * 0.25, 0.0, 0.0, 0.0]).collect();
    let img = image_from(&px, 4);
    let e = entropy_score(&[img.clone()]).unwrap();
    let mut color_only = 0.0;
    let hist = [4.0f64; 4];
    for c in hist {
        let p = c / 16.0;
        color_only -= c * p * p.ln();
    }
    assert!((e - color_only).abs() < 1e-12);
    assert!((e - entropy_oracle(&[img])).abs() < 1e-9);
}

#[test]
fn two_bin_split_matches_direct_summation() {
    // half black transparent, half white opaque: each pixel has p = 1/2 in both histograms
    let mut px = vec![[0.0, 0.0, 0.0, 0.0]; 8];
    px.extend(vec![[1.0, 1.0, 1.0, 1.0]; 8]);
    let img = image_from(&px, 4);
    let n = 16.0;
    let e = entropy_score(&[img.clone()]).unwrap();
    assert!((e - entropy_oracle(&[img])).abs() < 1e-9);
    assert!((e - n * 2f64.ln()).abs() < 1e-9, "{e}");
}

#[test]
fn empty_input_is_an_error() {
    assert!(matches!(entropy_score(&[]), Err(DvrError::EmptyInput(_))));
}

#[test]
fn view_count_thresholds() {
    assert_eq!(views_for_scene(0.05).unwrap(), 42);
    assert_eq!(views_for_scene(0.5).unwrap(), 92);
    assert_eq!(views_for_scene(0.8).unwrap(), 162);
    assert_eq!(views_for_scene(0.0).unwrap(), 42);
    assert_eq!(views_for_scene(1.0).unwrap(), 162);
    assert!(matches!(views_for_scene(-0.01), Err(DvrError::OutOfRange(_))));
}

#[test]
fn report_normalizes_to_the_maximum() {
    let flat = image_from(&[[0.5, 0.5, 0.5, 1.0]; 16], 4);
    let px: Vec<[f32; 4]> = (0..16).map(|i| [i as f32 / 15.0, 0.3, 0.1, (i % 3) as f32 / 2.0]).collect();
    let busy = image_from(&px, 4);
    let mut mid_px = vec![[0.0f32; 4]; 12];
    mid_px.extend(vec![[1.0, 1.0, 1.0, 1.0]; 4]);
    let mid = image_from(&mid_px, 4);
    let r = entropy_report(&[vec![flat], vec![busy], vec![mid]]).unwrap();
    assert_eq!(r.normalized[1], 1.0);
    assert_eq!(r.normalized[0], 0.0);
    assert_eq!(r.views[0], 42);
    assert_eq!(r.views[1], 162);
    assert!(r.normalized.iter().all(|s| (0.0..=1.0).contains(s)));
}

fn pixel() -> impl Strategy<Value = [f32; 4]> {
    (0u8..=255, 0u8..=255, 0u8..=255, 0u8..=255).prop_map(|(r, g, b, a)| {
        let a = a as f32 / 255.0;
        [r as f32 / 255.0 * a, g as f32 / 255.0 * a, b as f32 / 255.0 * a, a]
    })
}

proptest! {
    #[test]
    fn entropy_is_permutation_invariant(px in prop::collection::vec(pixel(), 16), seed in 0usize..16) {
        let img = image_from(&px, 4);
        let mut shuffled = px.clone();
        shuffled.rotate_left(seed);
        shuffled.reverse();
        let a = entropy_score(&[img.clone()]).unwrap();
        let b = entropy_score(&[image_from(&shuffled[..8], 4), image_from(&shuffled[8..], 4)]).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((a - entropy_oracle(&[img])).abs() < 1e-9);
    }

    #[test]
    fn duplication_preserves_scene_ordering(
        a in prop::collection::vec(pixel(), 8),
        b in prop::collection::vec(pixel(), 8),
    ) {
        let (ia, ib) = (image_from(&a, 4), image_from(&b, 4));
        let once = normalize_scores(&[entropy_score(&[ia.clone()]).unwrap(), entropy_score(&[ib.clone()]).unwrap()]);
        let twice = normalize_scores(&[
            entropy_score(&[ia.clone(), ia]).unwrap(),
            entropy_score(&[ib.clone(), ib]).unwrap(),
        ]);
        prop_assert!((once[0] - twice[0]).abs() < 1e-9 && (once[1] - twice[1]).abs() < 1e-9);
    }

    #[test]
    fn view_count_is_monotone(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(views_for_scene(lo).unwrap() <= views_for_scene(hi).unwrap());
    }
}
