use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::brdf::microfacet::{dot, normalize};

pub type Vec3 = [f64; 3];

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Texture {
    Constant { color: Vec3 },
    /// Solid 3D checkerboard with `scale` cells per world unit.
    Checker { scale: f64, a: Vec3, b: Vec3 },
    /// Two-octave value noise blended between `a` and `b`.
    Noise { scale: f64, seed: u32, a: Vec3, b: Vec3 },
    /// Bands along the object-space `x` axis.
    Stripes { scale: f64, a: Vec3, b: Vec3 },
}

const CHECKER_PHASE: f64 = 0.2371;

fn hash3(seed: u32, x: i64, y: i64, z: i64) -> f64 {
    let mut h = (seed as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for v in [x, y, z] {
        h ^= (v as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        h = h.rotate_left(31).wrapping_mul(0x1656_67B1_9E37_79F9);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u32, p: Vec3) -> f64 {
    let f = p.map(f64::floor);
    let t = [0, 1, 2].map(|i| {
        let u = p[i] - f[i];
        u * u * (3.0 - 2.0 * u)
    });
    let (x, y, z) = (f[0] as i64, f[1] as i64, f[2] as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { t[0] } else { 1.0 - t[0] })
                    * (if dy == 1 { t[1] } else { 1.0 - t[1] })
                    * (if dz == 1 { t[2] } else { 1.0 - t[2] });
                acc += w * hash3(seed, x + dx, y + dy, z + dz);
            }
        }
    }
    acc
}

fn lerp3(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

impl Texture {
    pub fn eval(&self, p: Vec3) -> Vec3 {
        match self {
            Texture::Constant { color } => *color,
            Texture::Checker { scale, a, b } => {
                // Offset so axis-aligned planes at integer coordinates do not
                // sit exactly on a cell boundary.
                let s: i64 = p.iter().map(|v| (v * scale + CHECKER_PHASE).floor() as i64).sum();
                if s.rem_euclid(2) == 0 {
                    *a
                } else {
                    *b
                }
            }
            Texture::Noise { scale, seed, a, b } => {
                let q = p.map(|v| v * scale);
                let n = 0.65 * value_noise(*seed, q) + 0.35 * value_noise(seed.wrapping_add(1), q.map(|v| v * 2.7));
                lerp3(*a, *b, n)
            }
            Texture::Stripes { scale, a, b } => {
                let t = 0.5 + 0.5 * (p[0] * scale * std::f64::consts::TAU).sin();
                lerp3(*a, *b, t)
            }
        }
    }
}

/// Procedural normal perturbation: a height field made of three plane waves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    /// Angular frequency per world unit.
    pub frequency: f64,
    /// Peak slope of each wave.
    pub slope: f64,
    pub seed: u32,
}

impl Bump {
    fn directions(&self) -> [Vec3; 3] {
        [0, 1, 2].map(|i| {
            let d = [0, 1, 2].map(|j| hash3(self.seed, i, j, 17) * 2.0 - 1.0);
            let d = normalize(d);
            if d.iter().all(|v| v.is_finite()) {
                d
            } else {
                [1.0, 0.0, 0.0]
            }
        })
    }

    /// Gradient of the height field at `p`.
    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let mut g = [0.0; 3];
        for k in self.directions() {
            g = add(g, scale(k, self.slope * (self.frequency * dot(k, p)).cos()));
        }
        g
    }

    /// Tilt `n` against the tangential part of the height gradient.
    pub fn perturb(&self, n: Vec3, p: Vec3) -> Vec3 {
        let g = self.gradient(p);
        let tangential = sub(g, scale(n, dot(g, n)));
        normalize(sub(n, tangential))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub albedo: Texture,
    pub roughness: f64,
    /// Amplitude of a noise modulation of roughness.
    pub roughness_variation: f64,
    pub emissive: Vec3,
    /// `false` gives a purely Lambertian surface.
    #[serde(default = "yes")]
    pub specular: bool,
    #[serde(default)]
    pub bump: Option<Bump>,
}

fn yes() -> bool {
    true
}

impl Material {
    pub fn roughness_at(&self, p: Vec3) -> f64 {
        if self.roughness_variation == 0.0 {
            return self.roughness.clamp(0.0, 1.0);
        }
        let n = value_noise(7, p.map(|v| v * 3.0)) - 0.5;
        (self.roughness + self.roughness_variation * n).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64 },
    Plane { point: Vec3, normal: Vec3 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub primitive: Primitive,
    pub material: Material,
    /// Rigid translation per frame.
    pub velocity: Vec3,
}

impl Object {
    pub fn offset(&self, t: f64) -> Vec3 {
        scale(self.velocity, t)
    }

    /// Ray parameter and object-space hit point of the nearest hit past `t_min`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, time: f64, t_min: f64) -> Option<(f64, Vec3, Vec3)> {
        let off = self.offset(time);
        match self.primitive {
            Primitive::Sphere { center, radius } => {
                let c = add(center, off);
                let oc = sub(origin, c);
                let b = dot(oc, dir);
                let cc = dot(oc, oc) - radius * radius;
                let disc = b * b - cc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [-b - sq, -b + sq].into_iter().find(|&t| t > t_min)?;
                let local = sub(add(origin, scale(dir, t)), c);
                Some((t, local, scale(local, 1.0 / radius)))
            }
            Primitive::Plane { point, normal } => {
                let n = normalize(normal);
                let p = add(point, off);
                let denom = dot(dir, n);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = dot(sub(p, origin), n) / denom;
                if t <= t_min {
                    return None;
                }
                let local = sub(add(origin, scale(dir, t)), off);
                Some((t, local, n))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Light {
    /// `direction` points from the surface toward the light.
    Directional { direction: Vec3, radiance: Vec3 },
    Point { position: Vec3, intensity: Vec3 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<Object>,
    pub lights: Vec<Light>,
    /// Radiance of rays that escape the scene.
    pub sky: Vec3,
    /// Specular reflectance at normal incidence, shared by all surfaces.
    pub f0: [f32; 3],
}

fn rand3<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Vec3 {
    [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)]
}

fn random_texture<R: Rng>(rng: &mut R) -> Texture {
    let a = rand3(rng, 0.05, 0.5);
    let b = rand3(rng, 0.45, 0.95);
    match rng.gen_range(0..3) {
        0 => Texture::Checker {
            scale: rng.gen_range(3.0..9.0),
            a,
            b,
        },
        1 => Texture::Noise {
            scale: rng.gen_range(4.0..12.0),
            seed: rng.gen(),
            a,
            b,
        },
        _ => Texture::Stripes {
            scale: rng.gen_range(2.0..6.0),
            a,
            b,
        },
    }
}

fn random_bump<R: Rng>(rng: &mut R) -> Bump {
    Bump {
        frequency: rng.gen_range(25.0..70.0),
        slope: rng.gen_range(0.2..0.45),
        seed: rng.gen(),
    }
}

impl Scene {
    /// A textured, bumpy ground and back wall, a handful of spheres (some moving),
    /// two directional lights and a point light.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut objects = vec![
            Object {
                primitive: Primitive::Plane {
                    point: [0.0, 0.0, 0.0],
                    normal: [0.0, 1.0, 0.0],
                },
                material: Material {
                    albedo: Texture::Checker {
                        scale: rng.gen_range(1.5..3.0),
                        a: rand3(&mut rng, 0.1, 0.35),
                        b: rand3(&mut rng, 0.6, 0.9),
                    },
                    roughness: rng.gen_range(0.3..0.7),
                    roughness_variation: 0.3,
                    emissive: [0.0; 3],
                    specular: true,
                    bump: Some(random_bump(&mut rng)),
                },
                velocity: [0.0; 3],
            },
            Object {
                primitive: Primitive::Plane {
                    point: [0.0, 0.0, -6.0],
                    normal: [0.0, 0.0, 1.0],
                },
                material: Material {
                    albedo: Texture::Noise {
                        scale: rng.gen_range(3.0..8.0),
                        seed: rng.gen(),
                        a: rand3(&mut rng, 0.1, 0.4),
                        b: rand3(&mut rng, 0.5, 0.9),
                    },
                    roughness: rng.gen_range(0.5..0.9),
                    roughness_variation: 0.2,
                    emissive: [0.0; 3],
                    specular: true,
                    bump: Some(random_bump(&mut rng)),
                },
                velocity: [0.0; 3],
            },
        ];
        let n_spheres = rng.gen_range(4..7);
        for i in 0..n_spheres {
            let radius = rng.gen_range(0.35..1.0);
            let center = [rng.gen_range(-3.0..3.0), radius, rng.gen_range(-4.5..0.5)];
            let emissive = if i == 0 {
                rand3(&mut rng, 0.5, 2.0)
            } else {
                [0.0; 3]
            };
            let velocity = if rng.gen_bool(0.4) {
                [rng.gen_range(-0.03..0.03), 0.0, rng.gen_range(-0.02..0.02)]
            } else {
                [0.0; 3]
            };
            objects.push(Object {
                primitive: Primitive::Sphere { center, radius },
                material: Material {
                    albedo: random_texture(&mut rng),
                    roughness: rng.gen_range(0.15..0.8),
                    roughness_variation: rng.gen_range(0.0..0.3),
                    emissive,
                    specular: true,
                    bump: rng.gen_bool(0.6).then(|| random_bump(&mut rng)),
                },
                velocity,
            });
        }
        let key = normalize([rng.gen_range(-1.0..1.0), rng.gen_range(0.8..1.5), rng.gen_range(0.2..1.0)]);
        let fill = normalize([-key[0], 0.6, -key[2] * 0.5 + 0.3]);
        let lights = vec![
            Light::Directional {
                direction: key,
                radiance: rand3(&mut rng, 2.0, 3.0),
            },
            Light::Directional {
                direction: fill,
                radiance: rand3(&mut rng, 0.4, 0.8),
            },
            Light::Point {
                position: [rng.gen_range(-2.0..2.0), rng.gen_range(2.0..3.5), rng.gen_range(-2.0..1.0)],
                intensity: rand3(&mut rng, 3.0, 6.0),
            },
        ];
        Scene {
            objects,
            lights,
            sky: rand3(&mut rng, 0.2, 0.5),
            f0: [0.04; 3],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_materials_are_physical() {
        for seed in 0..8 {
            let s = Scene::generate(seed);
            assert_eq!(s, Scene::generate(seed));
            for o in &s.objects {
                assert!((0.0..=1.0).contains(&o.material.roughness));
                for p in [[0.1, 0.2, 0.3], [5.0, -2.0, 1.0]] {
                    let a = o.material.albedo.eval(p);
                    assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }
    }

    #[test]
    fn sphere_hit_from_outside() {
        let o = Object {
            primitive: Primitive::Sphere {
                center: [0.0, 0.0, -5.0],
                radius: 1.0,
            },
            material: Material {
                albedo: Texture::Constant { color: [0.5; 3] },
                roughness: 0.5,
                roughness_variation: 0.0,
                emissive: [0.0; 3],
                specular: true,
                bump: None,
            },
            velocity: [0.0, 0.0, 1.0],
        };
        let (t, _, n) = o.intersect([0.0; 3], [0.0, 0.0, -1.0], 0.0, 1e-6).unwrap();
        assert!((t - 4.0).abs() < 1e-12 && n == [0.0, 0.0, 1.0]);
        let (t, _, _) = o.intersect([0.0; 3], [0.0, 0.0, -1.0], 2.0, 1e-6).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }
}
