//! Pinhole camera with a world-to-camera rotation.
//!
//! Camera space is x right, y down, z forward. Pixel `(i, j)` covers the
//! square `[i, i+1) x [j, j+1)`, so the principal point sits at
//! `(width/2, height/2)`.

use serde::{Deserialize, Serialize};

use crate::math::{cross, dot, mat_t_vec, mat_vec, normalize, sub, Mat3, Real, Vec3};

/// Primitives closer than this (camera-space z) are culled.
pub const NEAR_PLANE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub position: [f64; 3],
    /// World-to-camera rotation, row-major.
    #[serde(with = "row_major")]
    pub rotation: [[f64; 3]; 3],
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

mod row_major {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[[f64; 3]; 3], s: S) -> Result<S::Ok, S::Error> {
        let flat: Vec<f64> = m.iter().flatten().copied().collect();
        flat.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[[f64; 3]; 3], D::Error> {
        let flat = Vec::<f64>::deserialize(d)?;
        if flat.len() != 9 {
            return Err(serde::de::Error::invalid_length(flat.len(), &"9 rotation entries"));
        }
        Ok([
            [flat[0], flat[1], flat[2]],
            [flat[3], flat[4], flat[5]],
            [flat[6], flat[7], flat[8]],
        ])
    }
}

impl Camera {
    /// Camera at `position` looking at `target`. `up` is a world hint; when it
    /// is parallel to the viewing direction +y (or +x) is used instead.
    pub fn look_at(
        position: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fov_y: f64,
        width: u32,
        height: u32,
    ) -> Self {
        let forward = normalize(sub(target, position));
        let mut right = cross(forward, up);
        if dot(right, right) < 1e-12 {
            right = cross(forward, [0.0, 1.0, 0.0]);
            if dot(right, right) < 1e-12 {
                right = cross(forward, [1.0, 0.0, 0.0]);
            }
        }
        let right = normalize(right);
        let down = cross(forward, right);
        Camera {
            file: None,
            position,
            rotation: [right, down, forward],
            fov_y,
            width,
            height,
        }
    }

    /// Camera on a sphere around `center` using the shared spherical
    /// convention `(cos p cos a, cos p sin a, sin p)`, up = +z.
    pub fn orbit(
        center: [f64; 3],
        radius: f64,
        polar: f64,
        azimuth: f64,
        fov_y: f64,
        width: u32,
        height: u32,
    ) -> Self {
        let dir = spherical_direction(polar, azimuth);
        let position = [
            center[0] + radius * dir[0],
            center[1] + radius * dir[1],
            center[2] + radius * dir[2],
        ];
        Camera::look_at(position, center, [0.0, 0.0, 1.0], fov_y, width, height)
    }

    pub fn with_file(mut self, file: impl Into<String>) -> Self {
        self.file = Some(file.into());
        self
    }

    /// Focal length in pixels (square pixels).
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y).tan()
    }

    pub fn principal_point(&self) -> [f64; 2] {
        [0.5 * self.width as f64, 0.5 * self.height as f64]
    }

    /// Unit viewing axis in world space.
    pub fn forward(&self) -> [f64; 3] {
        self.rotation[2]
    }

    pub fn world_to_camera<T: Real>(&self, p: Vec3<T>) -> Vec3<T> {
        let r: Mat3<T> = crate::math::cast_mat(&self.rotation);
        let c = crate::math::cast3(self.position);
        mat_vec(&r, sub(p, c))
    }

    pub fn camera_to_world_dir(&self, d: [f64; 3]) -> [f64; 3] {
        mat_t_vec(&self.rotation, d)
    }

    /// Unit world-space ray direction through continuous pixel coordinate `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> [f64; 3] {
        let f = self.focal();
        let [cx, cy] = self.principal_point();
        normalize(self.camera_to_world_dir([(u - cx) / f, (v - cy) / f, 1.0]))
    }

    /// Checks the rotation is orthonormal and the field of view is sane.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(format!("fov_y {} outside (0, pi)", self.fov_y));
        }
        if self.width == 0 || self.height == 0 {
            return Err("zero-sized image".into());
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(r[i], r[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                if (d - expect).abs() > 1e-6 {
                    return Err(format!("rotation not orthonormal (row {i}.row {j} = {d})"));
                }
            }
        }
        Ok(())
    }
}

/// Unit vector for polar (elevation) and azimuth angles in radians:
/// `x = cos p cos a, y = cos p sin a, z = sin p`.
pub fn spherical_direction(polar: f64, azimuth: f64) -> [f64; 3] {
    [
        polar.cos() * azimuth.cos(),
        polar.cos() * azimuth.sin(),
        polar.sin(),
    ]
}
