use proptest::prelude::*;
use volsplat_core::gaussian::{build_covariance, project, ViewParams};
use volsplat_core::math::{mat_vec, normalize};
use volsplat_core::Camera;

/// Eigenvalues of a symmetric 3x3 matrix by Jacobi rotations.
fn sym_eigenvalues(mut a: [[f64; 3]; 3]) -> [f64; 3] {
    for _ in 0..100 {
        let (mut p, mut q, mut best) = (0, 1, 0.0);
        for i in 0..3 {
            for j in i + 1..3 {
                if a[i][j].abs() > best {
                    best = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if best < 1e-15 {
            break;
        }
        let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
        let (s, c) = theta.sin_cos();
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        r[p][p] = c;
        r[q][q] = c;
        r[p][q] = s;
        r[q][p] = -s;
        // a = r^T a r
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = (0..3).map(|k| a[i][k] * r[k][j]).sum();
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = (0..3).map(|k| r[k][i] * t[k][j]).sum();
            }
        }
    }
    let mut e = [a[0][0], a[1][1], a[2][2]];
    e.sort_by(f64::total_cmp);
    e
}

proptest! {
    #[test]
    fn covariance_eigenvalues_are_squared_scales(
        q in prop::array::uniform4(-1.0f64..1.0),
        s in prop::array::uniform3(0.05f64..3.0),
    ) {
        prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let sigma = build_covariance(q, s);
        let ev = sym_eigenvalues(sigma);
        let mut expect = s.map(|v| v * v);
        expect.sort_by(f64::total_cmp);
        for k in 0..3 {
            prop_assert!((ev[k] - expect[k]).abs() < 1e-9, "{ev:?} vs {expect:?}");
        }
    }

    #[test]
    fn camera_roll_rotates_screen_gaussian(
        mu in prop::array::uniform3(-0.5f64..0.5),
        q in prop::array::uniform4(0.1f64..1.0),
        s in prop::array::uniform3(0.05f64..0.5),
        roll in -3.0f64..3.0,
    ) {
        let base = Camera::orbit([0.0; 3], 4.0, 0.3, 0.9, 0.8, 64, 64);
        let (sn, cs) = roll.sin_cos();
        // rolling the camera frame by `roll` about its optical axis
        let rz = [[cs, sn, 0.0], [-sn, cs, 0.0], [0.0, 0.0, 1.0]];
        let mut rolled = base.clone();
        for i in 0..3 {
            for j in 0..3 {
                rolled.rotation[i][j] = (0..3).map(|k| rz[i][k] * base.rotation[k][j]).sum();
            }
        }
        let sigma = build_covariance(q, s);
        let a = project(mu, &sigma, &ViewParams::new(&base)).unwrap();
        let b = project(mu, &sigma, &ViewParams::new(&rolled)).unwrap();
        let c = [32.0, 32.0];
        let d = [a.mean[0] - c[0], a.mean[1] - c[1]];
        let rot = [cs * d[0] + sn * d[1], -sn * d[0] + cs * d[1]];
        prop_assert!((b.mean[0] - c[0] - rot[0]).abs() < 1e-6);
        prop_assert!((b.mean[1] - c[1] - rot[1]).abs() < 1e-6);
        // dilation is isotropic so the full cov2d conjugates
        let m = [[a.cov[0], a.cov[1]], [a.cov[1], a.cov[2]]];
        let r2 = [[cs, sn], [-sn, cs]];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = (0..2).flat_map(|k| (0..2).map(move |l| (k, l))).map(|(k, l)| r2[i][k] * m[k][l] * r2[j][l]).sum();
            }
        }
        let scale = a.cov[0].abs().max(1.0);
        prop_assert!((out[0][0] - b.cov[0]).abs() < 1e-6 * scale);
        prop_assert!((out[0][1] - b.cov[1]).abs() < 1e-6 * scale);
        prop_assert!((out[1][1] - b.cov[2]).abs() < 1e-6 * scale);
    }
}

#[test]
fn on_axis_unit_gaussian_projection() {
    let cam = Camera::look_at([0.0, 0.0, -5.0], [0.0; 3], [0.0, 1.0, 0.0], 0.7, 40, 30);
    let f = cam.focal();
    let sigma = build_covariance([1.0, 0.0, 0.0, 0.0], [1.0; 3]);
    let p = project([0.0; 3], &sigma, &ViewParams::new(&cam)).unwrap();
    let expect = (f / 5.0) * (f / 5.0) + 0.3;
    assert!((p.cov[0] - expect).abs() < 1e-9 && (p.cov[2] - expect).abs() < 1e-9);
    assert!(p.cov[1].abs() < 1e-9);
    assert!((p.mean[0] - 20.0).abs() < 1e-12 && (p.mean[1] - 15.0).abs() < 1e-12);
    let dir = normalize(mat_vec(&cam.rotation, [0.0, 0.0, 5.0]));
    assert!((dir[2] - 1.0).abs() < 1e-12);
}
