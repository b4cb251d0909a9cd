//! 3D Gaussian covariance construction and perspective projection to screen
//! space, with the matching backward passes.

use crate::camera::{Camera, NEAR_PLANE};
use crate::math::{cast3, cast_mat, mat_t_vec, mat_vec, sub, Mat3, Real, Vec3};

/// Low-pass dilation added to every projected covariance (pixel^2).
pub const COV2D_DILATION: f64 = 0.3;

/// Normalizes a w-first quaternion. A zero quaternion maps to identity.
pub fn normalize_quat<T: Real>(q: [T; 4]) -> [T; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n > T::zero() {
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
    } else {
        [T::one(), T::zero(), T::zero(), T::zero()]
    }
}

/// Rotation matrix of a unit w-first quaternion.
pub fn quat_to_rotation<T: Real>(q: [T; 4]) -> Mat3<T> {
    let [w, x, y, z] = q;
    let one = T::one();
    let two = T::lit(2.0);
    [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ]
}

/// Backward of [`quat_to_rotation`] for a unit quaternion.
fn quat_to_rotation_backward<T: Real>(q: [T; 4], g: &Mat3<T>) -> [T; 4] {
    let [w, x, y, z] = q;
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let gw = two
        * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let gx = two
        * (y * g[0][1] + z * g[0][2] + y * g[1][0] - w * g[1][2] + z * g[2][0] + w * g[2][1])
        - four * x * (g[1][1] + g[2][2]);
    let gy = two
        * (x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0] + z * g[2][1])
        - four * y * (g[0][0] + g[2][2]);
    let gz = two
        * (-w * g[0][1] + x * g[0][2] + w * g[1][0] + y * g[1][2] + x * g[2][0] + y * g[2][1])
        - four * z * (g[0][0] + g[1][1]);
    [gw, gx, gy, gz]
}

/// Backward of [`normalize_quat`].
fn normalize_quat_backward<T: Real>(q: [T; 4], g_unit: [T; 4]) -> [T; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n <= T::zero() {
        return [T::zero(); 4];
    }
    let u = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let proj = u[0] * g_unit[0] + u[1] * g_unit[1] + u[2] * g_unit[2] + u[3] * g_unit[3];
    [
        (g_unit[0] - u[0] * proj) / n,
        (g_unit[1] - u[1] * proj) / n,
        (g_unit[2] - u[2] * proj) / n,
        (g_unit[3] - u[3] * proj) / n,
    ]
}

/// `Sigma = R diag(s)^2 R^T` for quaternion `q` (normalized internally) and scales `s`.
pub fn build_covariance<T: Real>(q: [T; 4], s: Vec3<T>) -> Mat3<T> {
    let r = quat_to_rotation(normalize_quat(q));
    let mut sigma = [[T::zero(); 3]; 3];
    for (i, row) in sigma.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| r[i][k] * s[k] * s[k] * r[j][k]).sum();
        }
    }
    sigma
}

/// Backward of [`build_covariance`]. `g_sigma` is dL/dSigma treating all nine
/// entries as independent. Returns gradients for the raw quaternion and scales.
pub fn build_covariance_backward<T: Real>(
    q: [T; 4],
    s: Vec3<T>,
    g_sigma: &Mat3<T>,
) -> ([T; 4], Vec3<T>) {
    let qn = normalize_quat(q);
    let r = quat_to_rotation(qn);
    // Sigma = M M^T, M = R diag(s); dL/dM = (G + G^T) M
    let mut m = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            m[i][k] = r[i][k] * s[k];
        }
    }
    let mut gm = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            gm[i][k] = (0..3)
                .map(|j| (g_sigma[i][j] + g_sigma[j][i]) * m[j][k])
                .sum();
        }
    }
    let mut gs = [T::zero(); 3];
    let mut gr = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            gs[k] += gm[i][k] * r[i][k];
            gr[i][k] = gm[i][k] * s[k];
        }
    }
    let gq_unit = quat_to_rotation_backward(qn, &gr);
    (normalize_quat_backward(q, gq_unit), gs)
}

/// Per-view constants for projection, converted once to the kernel precision.
#[derive(Clone, Debug)]
pub struct ViewParams<T> {
    pub rotation: Mat3<T>,
    pub position: Vec3<T>,
    pub focal: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> ViewParams<T> {
    pub fn new(cam: &Camera) -> Self {
        let [cx, cy] = cam.principal_point();
        ViewParams {
            rotation: cast_mat(&cam.rotation),
            position: cast3(cam.position),
            focal: T::lit(cam.focal()),
            cx: T::lit(cx),
            cy: T::lit(cy),
            width: cam.width,
            height: cam.height,
        }
    }
}

/// Screen-space Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected<T> {
    /// Pixel coordinates of the projected mean.
    pub mean: [T; 2],
    /// Dilated 2D covariance `(xx, xy, yy)`.
    pub cov: [T; 3],
    /// Inverse of `cov`, `(xx, xy, yy)`.
    pub conic: [T; 3],
    /// Camera-space z of the mean.
    pub depth: T,
    /// Conservative 3-sigma footprint radius in pixels.
    pub radius: T,
    /// Camera-space mean, kept for the backward pass.
    pub t: Vec3<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionError {
    CulledBehindCamera,
    Degenerate,
}

/// Projects a Gaussian with mean `mu` and covariance `sigma`:
/// `cov2d = (J W Sigma W^T J^T)[:2,:2] + 0.3 I`.
pub fn project<T: Real>(
    mu: Vec3<T>,
    sigma: &Mat3<T>,
    view: &ViewParams<T>,
) -> Result<Projected<T>, ProjectionError> {
    let t = mat_vec(&view.rotation, sub(mu, view.position));
    if t[2] <= T::lit(NEAR_PLANE) {
        return Err(ProjectionError::CulledBehindCamera);
    }
    let f = view.focal;
    let iz = T::one() / t[2];
    let mean = [f * t[0] * iz + view.cx, f * t[1] * iz + view.cy];
    let jac = jacobian(t, f);
    let tm = jw(&jac, &view.rotation);
    let mut cov = [T::zero(); 3];
    // cov = tm sigma tm^T
    let ts = mul_2x3_3x3(&tm, sigma);
    cov[0] = (0..3).map(|k| ts[0][k] * tm[0][k]).sum();
    cov[1] = (0..3).map(|k| ts[0][k] * tm[1][k]).sum();
    cov[2] = (0..3).map(|k| ts[1][k] * tm[1][k]).sum();
    let dil = T::lit(COV2D_DILATION);
    cov[0] += dil;
    cov[2] += dil;
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > T::zero()) {
        return Err(ProjectionError::Degenerate);
    }
    let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
    let mid = T::lit(0.5) * (cov[0] + cov[2]);
    let lambda = mid + (mid * mid - det).max(T::lit(0.1)).sqrt();
    let radius = (T::lit(3.0) * lambda.sqrt()).ceil();
    Ok(Projected {
        mean,
        cov,
        conic,
        depth: t[2],
        radius,
        t,
    })
}

fn jacobian<T: Real>(t: Vec3<T>, f: T) -> [[T; 3]; 2] {
    let iz = T::one() / t[2];
    let iz2 = iz * iz;
    [
        [f * iz, T::zero(), -f * t[0] * iz2],
        [T::zero(), f * iz, -f * t[1] * iz2],
    ]
}

fn jw<T: Real>(j: &[[T; 3]; 2], w: &Mat3<T>) -> [[T; 3]; 2] {
    let mut out = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| j[r][k] * w[k][c]).sum();
        }
    }
    out
}

fn mul_2x3_3x3<T: Real>(a: &[[T; 3]; 2], b: &Mat3<T>) -> [[T; 3]; 2] {
    let mut out = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// Gradient of the loss with respect to one projected Gaussian.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectedGrad<T> {
    pub mean: [T; 2],
    /// Gradient for the conic parameters `(xx, xy, yy)` where the quadratic
    /// form is `xx dx^2 + 2 xy dx dy + yy dy^2`.
    pub conic: [T; 3],
    pub depth: T,
}

/// Backward of [`project`]. Returns dL/dmu and dL/dSigma (full 3x3, symmetric).
pub fn project_backward<T: Real>(
    mu: Vec3<T>,
    sigma: &Mat3<T>,
    view: &ViewParams<T>,
    proj: &Projected<T>,
    grad: &ProjectedGrad<T>,
) -> (Vec3<T>, Mat3<T>) {
    let _ = mu;
    let t = proj.t;
    let f = view.focal;
    let half = T::lit(0.5);

    // conic = cov^-1; dL/dcov = -inv G inv with G the symmetric conic gradient
    let inv = [[proj.conic[0], proj.conic[1]], [proj.conic[1], proj.conic[2]]];
    let g = [
        [grad.conic[0], half * grad.conic[1]],
        [half * grad.conic[1], grad.conic[2]],
    ];
    let mut tmp = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            tmp[i][j] = inv[i][0] * g[0][j] + inv[i][1] * g[1][j];
        }
    }
    let mut d_cov = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            d_cov[i][j] = -(tmp[i][0] * inv[0][j] + tmp[i][1] * inv[1][j]);
        }
    }

    let jac = jacobian(t, f);
    let tm = jw(&jac, &view.rotation);

    // dL/dSigma = T^T D T
    let mut d_sigma = [[T::zero(); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = T::zero();
            for i in 0..2 {
                for j in 0..2 {
                    acc += tm[i][a] * d_cov[i][j] * tm[j][b];
                }
            }
            d_sigma[a][b] = acc;
        }
    }

    // dL/dT = 2 D T Sigma, dL/dJ = dL/dT W^T
    let ts = mul_2x3_3x3(&tm, sigma);
    let mut d_tm = [[T::zero(); 3]; 2];
    for i in 0..2 {
        for c in 0..3 {
            d_tm[i][c] = T::lit(2.0) * (d_cov[i][0] * ts[0][c] + d_cov[i][1] * ts[1][c]);
        }
    }
    let w = &view.rotation;
    let mut d_j = [[T::zero(); 3]; 2];
    for i in 0..2 {
        for k in 0..3 {
            d_j[i][k] = (0..3).map(|c| d_tm[i][c] * w[k][c]).sum();
        }
    }

    let iz = T::one() / t[2];
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let two = T::lit(2.0);
    let mut g_t = [T::zero(); 3];
    g_t[0] += d_j[0][2] * (-f * iz2);
    g_t[1] += d_j[1][2] * (-f * iz2);
    g_t[2] += d_j[0][0] * (-f * iz2)
        + d_j[0][2] * (two * f * t[0] * iz3)
        + d_j[1][1] * (-f * iz2)
        + d_j[1][2] * (two * f * t[1] * iz3);

    g_t[0] += grad.mean[0] * f * iz;
    g_t[1] += grad.mean[1] * f * iz;
    g_t[2] -= (grad.mean[0] * f * t[0] + grad.mean[1] * f * t[1]) * iz2;
    g_t[2] += grad.depth;

    (mat_t_vec(&view.rotation, g_t), d_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{mat_mul, transpose};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_rotation_unit_scale_gives_identity() {
        let s = build_covariance([1.0f64, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn axis_aligned_scales_square_on_the_diagonal() {
        let s = build_covariance([1.0f64, 0.0, 0.0, 0.0], [2.0, 1.0, 1.0]);
        assert_eq!(s[0][0], 4.0);
        assert_eq!(s[1][1], 1.0);
        assert_eq!(s[2][2], 1.0);
        assert_eq!(s[0][1], 0.0);
    }

    #[test]
    fn quarter_turn_about_z_swaps_x_and_y_variance() {
        // Oracle: explicit rotation matrix and plain matrix products.
        let h = std::f64::consts::FRAC_PI_4;
        let q = [h.cos(), 0.0, 0.0, h.sin()];
        let r = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let d = [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let expect = mat_mul(&mat_mul(&r, &d), &transpose(&r));
        let got = build_covariance(q, [2.0, 1.0, 1.0]);
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(got[i][j], expect[i][j], 1e-12));
            }
        }
        assert!(close(got[0][0], 1.0, 1e-12) && close(got[1][1], 4.0, 1e-12));
    }

    #[test]
    fn on_axis_projection_matches_hand_jacobian() {
        let cam = Camera::look_at([0.0, 0.0, -5.0], [0.0; 3], [0.0, 1.0, 0.0], 0.9, 64, 64);
        let view = ViewParams::<f64>::new(&cam);
        let ident = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let p = project([0.0, 0.0, 0.0], &ident, &view).unwrap();
        let f = cam.focal();
        let k = (f / 5.0) * (f / 5.0);
        assert!(close(p.mean[0], 32.0, 1e-9) && close(p.mean[1], 32.0, 1e-9));
        assert!(close(p.cov[0], k + 0.3, 1e-9));
        assert!(close(p.cov[2], k + 0.3, 1e-9));
        assert!(close(p.cov[1], 0.0, 1e-9));
        assert!(close(p.depth, 5.0, 1e-12));
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = Camera::look_at([0.0, 0.0, -5.0], [0.0; 3], [0.0, 1.0, 0.0], 0.9, 64, 64);
        let view = ViewParams::<f64>::new(&cam);
        let ident = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(
            project([0.0, 0.0, -6.0], &ident, &view),
            Err(ProjectionError::CulledBehindCamera)
        );
    }

    #[test]
    fn projected_covariance_is_linear_in_sigma() {
        let cam = Camera::orbit([0.0; 3], 4.0, 0.3, 0.5, 0.8, 48, 40);
        let view = ViewParams::<f64>::new(&cam);
        let sigma = build_covariance([0.9, 0.1, -0.3, 0.2], [0.2, 0.05, 0.1]);
        let k = 1.7f64;
        let scaled = sigma.map(|r| r.map(|v| v * k * k));
        let a = project([0.1, 0.2, -0.1], &sigma, &view).unwrap();
        let b = project([0.1, 0.2, -0.1], &scaled, &view).unwrap();
        let d = COV2D_DILATION;
        assert!(close(b.cov[0] - d, k * k * (a.cov[0] - d), 1e-9));
        assert!(close(b.cov[1], k * k * a.cov[1], 1e-9));
        assert!(close(b.cov[2] - d, k * k * (a.cov[2] - d), 1e-9));
    }

    #[test]
    fn covariance_backward_matches_finite_differences() {
        let q = [0.8f64, 0.3, -0.2, 0.4];
        let s = [0.3, 0.7, 1.1];
        let g = [[0.2, -0.5, 0.1], [0.3, 0.4, -0.2], [0.6, 0.1, -0.7]];
        let loss = |q: [f64; 4], s: [f64; 3]| -> f64 {
            let m = build_covariance(q, s);
            (0..3).map(|i| (0..3).map(|j| m[i][j] * g[i][j]).sum::<f64>()).sum()
        };
        let (gq, gs) = build_covariance_backward(q, s, &g);
        let h = 1e-6;
        for k in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (loss(qp, s) - loss(qm, s)) / (2.0 * h);
            assert!(close(fd, gq[k], 1e-7), "q{k}: {fd} vs {}", gq[k]);
        }
        for k in 0..3 {
            let mut sp = s;
            let mut sm = s;
            sp[k] += h;
            sm[k] -= h;
            let fd = (loss(q, sp) - loss(q, sm)) / (2.0 * h);
            assert!(close(fd, gs[k], 1e-7), "s{k}: {fd} vs {}", gs[k]);
        }
    }

    #[test]
    fn projection_backward_matches_finite_differences() {
        let cam = Camera::orbit([0.0; 3], 3.0, 0.4, -0.7, 0.9, 40, 30);
        let view = ViewParams::<f64>::new(&cam);
        let mu = [0.2, -0.1, 0.3];
        let sigma = build_covariance([0.7, 0.2, 0.5, -0.1], [0.1, 0.25, 0.05]);
        let grad = ProjectedGrad {
            mean: [0.3, -0.8],
            conic: [0.5, -0.2, 0.9],
            depth: 0.4,
        };
        let loss = |mu: [f64; 3], sigma: &[[f64; 3]; 3]| -> f64 {
            let p = project(mu, sigma, &view).unwrap();
            grad.mean[0] * p.mean[0]
                + grad.mean[1] * p.mean[1]
                + grad.conic[0] * p.conic[0]
                + grad.conic[1] * p.conic[1]
                + grad.conic[2] * p.conic[2]
                + grad.depth * p.depth
        };
        let p = project(mu, &sigma, &view).unwrap();
        let (g_mu, g_sigma) = project_backward(mu, &sigma, &view, &p, &grad);
        let h = 1e-6;
        for k in 0..3 {
            let mut a = mu;
            let mut b = mu;
            a[k] += h;
            b[k] -= h;
            let fd = (loss(a, &sigma) - loss(b, &sigma)) / (2.0 * h);
            assert!((fd - g_mu[k]).abs() < 1e-5 * fd.abs().max(1.0), "mu{k}: {fd} vs {}", g_mu[k]);
        }
        // symmetric perturbation of sigma entries
        for a in 0..3 {
            for b in a..3 {
                let mut sp = sigma;
                let mut sm = sigma;
                sp[a][b] += h;
                sm[a][b] -= h;
                if a != b {
                    sp[b][a] += h;
                    sm[b][a] -= h;
                }
                let fd = (loss(mu, &sp) - loss(mu, &sm)) / (2.0 * h);
                let an = if a == b { g_sigma[a][a] } else { g_sigma[a][b] + g_sigma[b][a] };
                assert!((fd - an).abs() < 1e-5 * fd.abs().max(1.0), "sigma{a}{b}: {fd} vs {an}");
            }
        }
    }
}
