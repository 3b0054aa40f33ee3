use serde::{Deserialize, Serialize};

use super::scene::{add, scale, sub, Vec3};
use crate::brdf::microfacet::{cross, dot, normalize};

/// Pinhole camera. Pixel `(px, py)` has its center at continuous coordinate
/// `(px, py)`; `y` grows downward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub fov_y_deg: f64,
}

impl Camera {
    pub fn look_at(position: Vec3, target: Vec3, fov_y_deg: f64) -> Self {
        Camera {
            position,
            target,
            up: [0.0, 1.0, 0.0],
            fov_y_deg,
        }
    }

    /// `(right, up, forward)`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = normalize(sub(self.target, self.position));
        let r = normalize(cross(f, self.up));
        let u = cross(r, f);
        (r, u, f)
    }

    fn tan_half(&self) -> f64 {
        (self.fov_y_deg.to_radians() * 0.5).tan()
    }

    /// Unit ray direction through continuous pixel coordinate `(u, v)`.
    pub fn ray(&self, u: f64, v: f64, width: usize, height: usize) -> Vec3 {
        let (r, up, f) = self.basis();
        let th = self.tan_half();
        let aspect = width as f64 / height as f64;
        let x = ((u + 0.5) / width as f64 * 2.0 - 1.0) * th * aspect;
        let y = (1.0 - (v + 0.5) / height as f64 * 2.0) * th;
        normalize(add(add(f, scale(r, x)), scale(up, y)))
    }

    /// Continuous pixel coordinate and view depth of a world point.
    pub fn project(&self, p: Vec3, width: usize, height: usize) -> Option<(f64, f64, f64)> {
        let (r, up, f) = self.basis();
        let d = sub(p, self.position);
        let z = dot(d, f);
        if z <= 1e-9 {
            return None;
        }
        let th = self.tan_half();
        let aspect = width as f64 / height as f64;
        let x = dot(d, r) / (z * th * aspect);
        let y = dot(d, up) / (z * th);
        let u = (x + 1.0) * 0.5 * width as f64 - 0.5;
        let v = (1.0 - y) * 0.5 * height as f64 - 0.5;
        Some((u, v, z))
    }

    /// Row-major 4x4 world-to-camera matrix (camera looks down `-z`).
    pub fn view_matrix(&self) -> [[f64; 4]; 4] {
        let (r, u, f) = self.basis();
        let p = self.position;
        [
            [r[0], r[1], r[2], -dot(r, p)],
            [u[0], u[1], u[2], -dot(u, p)],
            [-f[0], -f[1], -f[2], dot(f, p)],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// `[fx, fy, cx, cy]` in pixels for the given resolution.
    pub fn intrinsics(&self, width: usize, height: usize) -> [f64; 4] {
        let th = self.tan_half();
        let aspect = width as f64 / height as f64;
        [
            width as f64 / (2.0 * th * aspect),
            height as f64 / (2.0 * th),
            width as f64 * 0.5 - 0.5,
            height as f64 * 0.5 - 0.5,
        ]
    }
}

/// Camera moving linearly in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPath {
    pub start: Camera,
    /// Position change per frame.
    pub velocity: Vec3,
    /// Look-at target change per frame.
    pub target_velocity: Vec3,
}

impl CameraPath {
    pub fn fixed(camera: Camera) -> Self {
        CameraPath {
            start: camera,
            velocity: [0.0; 3],
            target_velocity: [0.0; 3],
        }
    }

    /// A slow pan across the default scene layout.
    pub fn pan(seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let start = Camera::look_at(
            [rng.gen_range(-1.5..1.5), rng.gen_range(1.3..2.2), rng.gen_range(4.0..5.5)],
            [rng.gen_range(-0.5..0.5), 0.7, -1.5],
            50.0,
        );
        let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        CameraPath {
            start,
            velocity: [dir * rng.gen_range(0.02..0.05), 0.0, rng.gen_range(-0.02..0.0)],
            target_velocity: [dir * rng.gen_range(0.0..0.02), 0.0, 0.0],
        }
    }

    pub fn at(&self, t: f64) -> Camera {
        Camera {
            position: add(self.start.position, scale(self.velocity, t)),
            target: add(self.start.target, scale(self.target_velocity, t)),
            ..self.start
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_inverts_ray() {
        let c = Camera::look_at([0.3, 1.5, 4.0], [0.0, 0.5, -1.0], 50.0);
        for &(u, v) in &[(0.0, 0.0), (63.0, 10.5), (17.25, 40.0)] {
            let d = c.ray(u, v, 64, 48);
            let p = add(c.position, scale(d, 3.7));
            let (pu, pv, _) = c.project(p, 64, 48).unwrap();
            assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }
    }
}
