//! Real spherical-harmonics color up to degree 3.

use crate::math::{normalize, normalize_backward, sub, Real, Vec3};

pub const MAX_SH_DEGREE: usize = 3;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// DC coefficient that evaluates to color `c` in every direction.
pub fn dc_from_rgb(c: f64) -> f64 {
    (c - 0.5) / C0
}

/// Number of coefficients (per channel) for degree `l`.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Real SH basis values up to `degree` at unit direction `d`.
pub fn basis<T: Real>(degree: usize, d: Vec3<T>) -> [T; 16] {
    let [x, y, z] = d;
    let c = T::lit;
    let mut b = [T::zero(); 16];
    b[0] = c(C0);
    if degree >= 1 {
        b[1] = -c(C1) * y;
        b[2] = c(C1) * z;
        b[3] = -c(C1) * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = c(C2[0]) * x * y;
        b[5] = c(C2[1]) * y * z;
        b[6] = c(C2[2]) * (c(2.0) * zz - xx - yy);
        b[7] = c(C2[3]) * x * z;
        b[8] = c(C2[4]) * (xx - yy);
        if degree >= 3 {
            b[9] = c(C3[0]) * y * (c(3.0) * xx - yy);
            b[10] = c(C3[1]) * x * y * z;
            b[11] = c(C3[2]) * y * (c(4.0) * zz - xx - yy);
            b[12] = c(C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy);
            b[13] = c(C3[4]) * x * (c(4.0) * zz - xx - yy);
            b[14] = c(C3[5]) * z * (xx - yy);
            b[15] = c(C3[6]) * x * (xx - c(3.0) * yy);
        }
    }
    b
}

/// Jacobian of [`basis`] with respect to the direction components.
fn basis_jacobian<T: Real>(degree: usize, d: Vec3<T>) -> [Vec3<T>; 16] {
    let [x, y, z] = d;
    let c = T::lit;
    let o = T::zero();
    let mut j = [[o; 3]; 16];
    if degree >= 1 {
        j[1] = [o, -c(C1), o];
        j[2] = [o, o, c(C1)];
        j[3] = [-c(C1), o, o];
    }
    if degree >= 2 {
        let k = |s: f64, v: Vec3<T>| [c(s) * v[0], c(s) * v[1], c(s) * v[2]];
        j[4] = k(C2[0], [y, x, o]);
        j[5] = k(C2[1], [o, z, y]);
        j[6] = k(C2[2], [c(-2.0) * x, c(-2.0) * y, c(4.0) * z]);
        j[7] = k(C2[3], [z, o, x]);
        j[8] = k(C2[4], [c(2.0) * x, c(-2.0) * y, o]);
        if degree >= 3 {
            let (xx, yy, zz) = (x * x, y * y, z * z);
            j[9] = k(C3[0], [c(6.0) * x * y, c(3.0) * (xx - yy), o]);
            j[10] = k(C3[1], [y * z, x * z, x * y]);
            j[11] = k(
                C3[2],
                [c(-2.0) * x * y, c(4.0) * zz - xx - c(3.0) * yy, c(8.0) * y * z],
            );
            j[12] = k(
                C3[3],
                [c(-6.0) * x * z, c(-6.0) * y * z, c(6.0) * zz - c(3.0) * (xx + yy)],
            );
            j[13] = k(
                C3[4],
                [c(4.0) * zz - c(3.0) * xx - yy, c(-2.0) * x * y, c(8.0) * x * z],
            );
            j[14] = k(C3[5], [c(2.0) * x * z, c(-2.0) * y * z, xx - yy]);
            j[15] = k(C3[6], [c(3.0) * (xx - yy), c(-6.0) * x * y, o]);
        }
    }
    j
}

/// Evaluates SH color: `max(0, sum_k c_k Y_k(dir) + 0.5)` per channel.
/// `coeffs` holds at least `coeff_count(degree)` rgb triples.
pub fn eval_sh<T: Real>(coeffs: &[[T; 3]], degree: usize, dir: Vec3<T>) -> Vec3<T> {
    let b = basis(degree, dir);
    let mut rgb = [T::lit(0.5); 3];
    for (k, coeff) in coeffs.iter().take(coeff_count(degree)).enumerate() {
        for ch in 0..3 {
            rgb[ch] += coeff[ch] * b[k];
        }
    }
    rgb.map(|v| v.max(T::zero()))
}

/// SH color of a splat at `mu` seen from `cam_pos` (direction camera -> splat).
pub fn eval_sh_at<T: Real>(coeffs: &[[T; 3]], degree: usize, mu: Vec3<T>, cam_pos: Vec3<T>) -> Vec3<T> {
    eval_sh(coeffs, degree, normalize(sub(mu, cam_pos)))
}

/// Backward of [`eval_sh_at`]. Accumulates coefficient gradients into
/// `g_coeffs` and returns dL/dmu through the view direction.
pub fn eval_sh_at_backward<T: Real>(
    coeffs: &[[T; 3]],
    degree: usize,
    mu: Vec3<T>,
    cam_pos: Vec3<T>,
    g_rgb: Vec3<T>,
    g_coeffs: &mut [[T; 3]],
) -> Vec3<T> {
    let raw_dir = sub(mu, cam_pos);
    let dir = normalize(raw_dir);
    let b = basis(degree, dir);
    let n = coeff_count(degree);
    let mut pre = [T::lit(0.5); 3];
    for (k, coeff) in coeffs.iter().take(n).enumerate() {
        for ch in 0..3 {
            pre[ch] += coeff[ch] * b[k];
        }
    }
    let mut g = g_rgb;
    for ch in 0..3 {
        if pre[ch] < T::zero() {
            g[ch] = T::zero();
        }
    }
    for k in 0..n {
        for ch in 0..3 {
            g_coeffs[k][ch] += g[ch] * b[k];
        }
    }
    if degree == 0 {
        return [T::zero(); 3];
    }
    let jac = basis_jacobian(degree, dir);
    let mut g_dir = [T::zero(); 3];
    for k in 1..n {
        let w = (0..3).map(|ch| g[ch] * coeffs[k][ch]).sum::<T>();
        for a in 0..3 {
            g_dir[a] += w * jac[k][a];
        }
    }
    normalize_backward(raw_dir, g_dir)
}
