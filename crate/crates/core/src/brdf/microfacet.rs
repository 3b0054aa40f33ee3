//! GGX microfacet terms shared by the LUT integrator and the renderer.
//!
//! Local frame: the surface normal is `+z`. `alpha = roughness²`.

use std::f64::consts::PI;

/// Lower bound on `alpha` so the distribution stays finite at roughness 0.
pub const MIN_ALPHA: f64 = 1e-4;

pub fn alpha_from_roughness(roughness: f64) -> f64 {
    let r = roughness.clamp(0.0, 1.0);
    (r * r).max(MIN_ALPHA)
}

/// GGX normal distribution `D(h)` for `cos θ_h = n_dot_h`.
pub fn ggx_d(n_dot_h: f64, alpha: f64) -> f64 {
    if n_dot_h <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

/// Smith `Λ` for a direction with `cos θ = n_dot_x`.
pub fn smith_lambda(n_dot_x: f64, alpha: f64) -> f64 {
    let c2 = (n_dot_x * n_dot_x).max(1e-300);
    let tan2 = ((1.0 - c2) / c2).max(0.0);
    0.5 * (-1.0 + (1.0 + alpha * alpha * tan2).sqrt())
}

pub fn smith_g1(n_dot_v: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + smith_lambda(n_dot_v, alpha))
}

/// Height-correlated masking-shadowing `G2(v, l)`.
pub fn smith_g2(n_dot_v: f64, n_dot_l: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + smith_lambda(n_dot_v, alpha) + smith_lambda(n_dot_l, alpha))
}

/// Schlick weight `(1 - v·h)^5`.
pub fn schlick_weight(v_dot_h: f64) -> f64 {
    let m = (1.0 - v_dot_h).clamp(0.0, 1.0);
    let m2 = m * m;
    m2 * m2 * m
}

/// GGX specular BRDF with Fresnel factored out: `D G2 / (4 n·v n·l)`.
pub fn ggx_specular_unit_fresnel(n_dot_v: f64, n_dot_l: f64, n_dot_h: f64, alpha: f64) -> f64 {
    if n_dot_v <= 0.0 || n_dot_l <= 0.0 {
        return 0.0;
    }
    ggx_d(n_dot_h, alpha) * smith_g2(n_dot_v, n_dot_l, alpha) / (4.0 * n_dot_v * n_dot_l)
}

/// Sample a half vector from the distribution of visible normals for view
/// direction `v` (local frame, `v.z > 0`), isotropic `alpha`.
pub fn sample_vndf(v: [f64; 3], alpha: f64, u1: f64, u2: f64) -> [f64; 3] {
    let vh = normalize([alpha * v[0], alpha * v[1], v[2]]);
    let lensq = vh[0] * vh[0] + vh[1] * vh[1];
    let t1 = if lensq > 0.0 {
        let inv = 1.0 / lensq.sqrt();
        [-vh[1] * inv, vh[0] * inv, 0.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let t2 = cross(vh, t1);
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let p1 = r * phi.cos();
    let mut p2 = r * phi.sin();
    let s = 0.5 * (1.0 + vh[2]);
    p2 = (1.0 - s) * (1.0 - p1 * p1).max(0.0).sqrt() + s * p2;
    let pz = (1.0 - p1 * p1 - p2 * p2).max(0.0).sqrt();
    let nh = [
        p1 * t1[0] + p2 * t2[0] + pz * vh[0],
        p1 * t1[1] + p2 * t2[1] + pz * vh[1],
        p1 * t1[2] + p2 * t2[2] + pz * vh[2],
    ];
    normalize([alpha * nh[0], alpha * nh[1], nh[2].max(0.0)])
}

pub fn reflect(v: [f64; 3], h: [f64; 3]) -> [f64; 3] {
    let d = 2.0 * dot(v, h);
    [d * h[0] - v[0], d * h[1] - v[1], d * h[2] - v[2]]
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn normalize(a: [f64; 3]) -> [f64; 3] {
    let l = dot(a, a).sqrt();
    if l == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    [a[0] / l, a[1] / l, a[2] / l]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vndf_samples_are_unit_and_upper_hemisphere() {
        let v = normalize([0.6, 0.0, 0.8]);
        for i in 0..64 {
            let h = sample_vndf(v, 0.3, (i as f64 + 0.5) / 64.0, ((i * 37) % 64) as f64 / 64.0);
            assert!((dot(h, h) - 1.0).abs() < 1e-12);
            assert!(h[2] >= 0.0);
        }
    }

    #[test]
    fn g2_is_bounded_by_g1() {
        for &a in &[0.01, 0.2, 0.7, 1.0] {
            for &nv in &[0.05, 0.3, 0.9] {
                for &nl in &[0.1, 0.5, 1.0] {
                    assert!(smith_g2(nv, nl, a) <= smith_g1(nv, a) + 1e-15);
                }
            }
        }
    }
}
