mod common;

use common::{random_scene3, rng, Scene3};
use rand::Rng;
use volsplat_core::losses::{bilateral_smoothness, normal_consistency, photometric, ssim};
use volsplat_core::math::normalize;
use volsplat_core::raster::ExecMode;
use volsplat_core::render::{render, render_backward, MapGrads, RenderSettings, SplatGeometry};
use volsplat_core::shading::{shade, shade_backward, Light, SplatShading, TermTransform};

const H: f64 = 1e-4;
const CHANNELS: usize = 3;

struct Weights {
    feat: Vec<f64>,
    alpha: Vec<f64>,
    depth: Vec<f64>,
    normal: Vec<f64>,
}

fn settings() -> RenderSettings {
    RenderSettings {
        depth: true,
        normals: true,
        mode: ExecMode::Sequential,
    }
}

fn loss(s: &Scene3, w: &Weights) -> f64 {
    let geom = SplatGeometry {
        mu: &s.mu,
        rotation: &s.rotation,
        scale: &s.scale,
        opacity: &s.opacity,
    };
    let (out, _) = render(&geom, &s.features, CHANNELS, Some(&s.normals), &s.cam, &settings()).unwrap();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    dot(&out.features, &w.feat)
        + dot(&out.alpha, &w.alpha)
        + dot(out.depth.as_ref().unwrap(), &w.depth)
        + dot(out.normal.as_ref().unwrap(), &w.normal)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Central difference with step `h`. Alpha values crossing the 1/255 skip
/// threshold make the forward pass discontinuous; when the one-sided slopes
/// disagree the stencil straddles such a jump and a 100x smaller step is used.
fn stencil_derivative(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let (fp, f0, fm) = (f(h), f(0.0), f(-h));
    let fwd = (fp - f0) / h;
    let bwd = (f0 - fm) / h;
    if (fwd - bwd).abs() > 1e-2 * (1.0 + fwd.abs().max(bwd.abs())) {
        let h = h * 1e-2;
        return (f(h) - f(-h)) / (2.0 * h);
    }
    (fp - fm) / (2.0 * h)
}

fn check_scene(seed: u64) -> f64 {
    let mut r = rng(seed);
    let size = 16;
    let s = random_scene3(&mut r, 10, size, CHANNELS);
    let npix = (size * size) as usize;
    let mut rand_vec = |n: usize| (0..n).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let w = Weights {
        feat: rand_vec(npix * CHANNELS),
        alpha: rand_vec(npix),
        depth: rand_vec(npix),
        normal: rand_vec(npix * 3),
    };
    let geom = SplatGeometry {
        mu: &s.mu,
        rotation: &s.rotation,
        scale: &s.scale,
        opacity: &s.opacity,
    };
    let (_, state) = render(&geom, &s.features, CHANNELS, Some(&s.normals), &s.cam, &settings()).unwrap();
    let g = render_backward(
        &geom,
        Some(&s.normals),
        &state,
        &MapGrads {
            features: &w.feat,
            alpha: &w.alpha,
            depth: Some(&w.depth),
            normal: Some(&w.normal),
        },
    )
    .unwrap();

    let mut worst: f64 = 0.0;
    let mut probe = |analytic: f64, edit: &dyn Fn(&mut Scene3, f64), what: String| {
        let at = |h: f64| {
            let mut p = clone_scene(&s);
            edit(&mut p, h);
            loss(&p, &w)
        };
        let fd = stencil_derivative(&at, H);
        let e = rel_err(analytic, fd);
        assert!(e < 1e-3, "seed {seed} {what}: analytic {analytic} fd {fd}");
        worst = worst.max(e);
    };
    for i in 0..s.mu.len() {
        for k in 0..3 {
            probe(g.mu[i][k], &|sc, h| sc.mu[i][k] += h, format!("mu[{i}][{k}]"));
            probe(g.scale[i][k], &|sc, h| sc.scale[i][k] += h, format!("scale[{i}][{k}]"));
            probe(g.normals[i][k], &|sc, h| sc.normals[i][k] += h, format!("normal[{i}][{k}]"));
        }
        for k in 0..4 {
            probe(g.rotation[i][k], &|sc, h| sc.rotation[i][k] += h, format!("rot[{i}][{k}]"));
        }
        probe(g.opacity[i], &|sc, h| sc.opacity[i] += h, format!("opacity[{i}]"));
        for c in 0..CHANNELS {
            probe(
                g.features[i * CHANNELS + c],
                &|sc, h| sc.features[i * CHANNELS + c] += h,
                format!("feature[{i}][{c}]"),
            );
        }
    }
    worst
}

fn clone_scene(s: &Scene3) -> Scene3 {
    Scene3 {
        mu: s.mu.clone(),
        rotation: s.rotation.clone(),
        scale: s.scale.clone(),
        opacity: s.opacity.clone(),
        normals: s.normals.clone(),
        features: s.features.clone(),
        cam: s.cam.clone(),
    }
}

#[test]
fn render_gradients_match_finite_differences() {
    for seed in 0..8 {
        check_scene(seed);
    }
}

#[test]
fn shading_gradients_match_finite_differences() {
    let mut r = rng(5);
    for case in 0..40 {
        let mut v3 = |lo: f64, hi: f64| [0; 3].map(|_| r.random_range(lo..hi));
        let mut s = SplatShading {
            palette: v3(0.1, 0.8),
            offset: v3(-0.1, 0.1),
            terms: [0.0; 4],
            normal: v3(-1.0, 1.0),
            mu: v3(-0.5, 0.5),
        };
        let cam = [3.0, -1.0, 2.0];
        let t = TermTransform {
            scale: [0.9, 1.1, 1.2, 0.8],
            bias: [0.01, -0.02, 0.03, 0.5],
        };
        let light = if case % 2 == 0 { Light::Headlight } else { Light::Directional(normalize(v3(-1.0, 1.0))) };
        let ga = v3(-1.0, 1.0);
        let gd = v3(-1.0, 1.0);
        let gs = r.random_range(-1.0..1.0);
        s.terms = [r.random_range(0.1..0.7), r.random_range(0.1..0.7), r.random_range(0.1..0.7), r.random_range(2.0..20.0)];
        let f = |s: &SplatShading<f64>, t: &TermTransform<f64>, light: &Light<f64>| {
            let o = shade(s, light, t, cam);
            (0..3).map(|c| o.ambient[c] * ga[c] + o.diffuse[c] * gd[c]).sum::<f64>() + o.specular * gs
        };
        let g = shade_backward(&s, &light, &t, cam, ga, gd, gs);
        let fd = |edit: &dyn Fn(&mut SplatShading<f64>, &mut TermTransform<f64>, &mut Light<f64>, f64)| {
            let (mut sp, mut tp, mut lp) = (s, t, light);
            edit(&mut sp, &mut tp, &mut lp, H);
            let (mut sm, mut tm, mut lm) = (s, t, light);
            edit(&mut sm, &mut tm, &mut lm, -H);
            (f(&sp, &tp, &lp) - f(&sm, &tm, &lm)) / (2.0 * H)
        };
        let check = |a: f64, b: f64, what: &str| assert!(rel_err(a, b) < 1e-3, "case {case} {what}: {a} vs {b}");
        for k in 0..3 {
            check(g.palette[k], fd(&|s, _, _, h| s.palette[k] += h), "palette");
            check(g.offset[k], fd(&|s, _, _, h| s.offset[k] += h), "offset");
            check(g.normal[k], fd(&|s, _, _, h| s.normal[k] += h), "normal");
            check(g.mu[k], fd(&|s, _, _, h| s.mu[k] += h), "mu");
            if let Light::Directional(_) = light {
                check(
                    g.light_dir[k],
                    fd(&|_, _, l, h| {
                        if let Light::Directional(d) = l {
                            d[k] += h
                        }
                    }),
                    "light",
                );
            }
        }
        for j in 0..4 {
            check(g.terms[j], fd(&|s, _, _, h| s.terms[j] += h), "terms");
            check(g.transform_scale[j], fd(&|_, t, _, h| t.scale[j] += h), "lambda");
            check(g.transform_bias[j], fd(&|_, t, _, h| t.bias[j] += h), "bias");
        }
    }
}

#[test]
fn photometric_gradient_matches_finite_differences() {
    let mut r = rng(21);
    let (w, h) = (9, 7);
    let n = w * h * 4;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let (_, g) = photometric(&x, &y, w, h, 0.8, 0.2).unwrap();
    for i in (0..n).step_by(5) {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += 1e-6;
        m[i] -= 1e-6;
        let fd = (photometric(&p, &y, w, h, 0.8, 0.2).unwrap().0 - photometric(&m, &y, w, h, 0.8, 0.2).unwrap().0) / 2e-6;
        assert!(rel_err(g[i], fd) < 1e-3, "{i}: {} vs {fd}", g[i]);
    }
    let (_, gs) = ssim(&x, &y, w, h, 4).unwrap();
    for i in (0..n).step_by(3) {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += 1e-6;
        m[i] -= 1e-6;
        let fd = (ssim(&p, &y, w, h, 4).unwrap().0 - ssim(&m, &y, w, h, 4).unwrap().0) / 2e-6;
        assert!(rel_err(gs[i], fd) < 1e-4, "ssim {i}: {} vs {fd}", gs[i]);
    }
}

#[test]
fn normal_and_smoothness_gradients_match_finite_differences() {
    let mut r = rng(8);
    let (w, h) = (6, 5);
    let npix = w * h;
    let n: Vec<f64> = (0..npix * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let t: Vec<f64> = (0..npix * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let mask: Vec<bool> = (0..npix).map(|i| i % 4 != 0).collect();
    let (_, g) = normal_consistency(&n, &t, &mask).unwrap();
    for i in 0..n.len() {
        let mut p = n.clone();
        let mut m = n.clone();
        p[i] += H;
        m[i] -= H;
        let fd = (normal_consistency(&p, &t, &mask).unwrap().0 - normal_consistency(&m, &t, &mask).unwrap().0) / (2.0 * H);
        assert!(rel_err(g[i], fd) < 1e-3);
    }
    let attr: Vec<f64> = (0..npix * 2).map(|_| r.random_range(0.0..1.0)).collect();
    let guide: Vec<f64> = (0..npix * 3).map(|_| r.random_range(0.0..1.0)).collect();
    let (_, g) = bilateral_smoothness(&attr, 2, &guide, w, h, Some(&mask)).unwrap();
    for i in 0..attr.len() {
        let mut p = attr.clone();
        let mut m = attr.clone();
        p[i] += 1e-7;
        m[i] -= 1e-7;
        let f = |a: &[f64]| bilateral_smoothness(a, 2, &guide, w, h, Some(&mask)).unwrap().0;
        let fd = (f(&p) - f(&m)) / 2e-7;
        assert!(rel_err(g[i], fd) < 1e-3, "{i}: {} vs {fd}", g[i]);
    }
}

