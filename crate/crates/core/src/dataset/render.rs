//! Analytic primary-ray renderer with direct lighting and no shadows.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{Camera, CameraPath};
use super::scene::{add, scale, sub, Light, Scene, Vec3};
use crate::brdf::microfacet::{alpha_from_roughness, dot, ggx_specular_unit_fresnel, normalize, schlick_weight};
use crate::brdf::ShadingGBuffer;
use crate::tensor::{Shape, Tensor};

/// Smallest stored `n·v`; silhouettes would otherwise reach zero.
pub const NDOTV_EPS: f64 = 1e-4;
/// Depth written for rays that miss every object.
pub const SKY_DEPTH: f64 = 1e4;

/// One rendered frame at one resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    pub color: Tensor<f32>,
    pub gbuffer: ShadingGBuffer,
    pub camera: Camera,
    pub frame_index: usize,
}

impl FrameBundle {
    pub fn width(&self) -> usize {
        self.color.shape().width
    }

    pub fn height(&self) -> usize {
        self.color.shape().height
    }
}

/// How LR frames are produced from the scene.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrMode {
    /// Point-sampled at LR pixel centers.
    #[default]
    Native,
    /// `r x r` box average of the HR frame.
    Box,
}

/// Everything evaluated for one primary ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub color: Vec3,
    pub albedo: Vec3,
    pub roughness: f64,
    pub normal: Vec3,
    pub ndotv: f64,
    pub emissive: Vec3,
    pub depth: f64,
    pub motion: [f64; 2],
}

fn nearest_hit(scene: &Scene, origin: Vec3, dir: Vec3, time: f64) -> Option<(usize, f64, Vec3, Vec3)> {
    let mut best: Option<(usize, f64, Vec3, Vec3)> = None;
    for (i, o) in scene.objects.iter().enumerate() {
        if let Some((t, local, n)) = o.intersect(origin, dir, time, 1e-6) {
            if best.map_or(true, |b| t < b.1) {
                best = Some((i, t, local, n));
            }
        }
    }
    best
}

/// Shade the ray through continuous pixel coordinate `(u, v)` at `time`.
/// `prev` is the camera one frame earlier, used for motion vectors.
pub fn shade_sample(scene: &Scene, camera: &Camera, prev: &Camera, time: f64, u: f64, v: f64, w: usize, h: usize) -> Sample {
    let dir = camera.ray(u, v, w, h);
    let origin = camera.position;
    let (_, _, forward) = camera.basis();
    let motion_of = |p: Vec3| match prev.project(p, w, h) {
        Some((pu, pv, _)) => [pu - u, pv - v],
        None => [0.0, 0.0],
    };

    let Some((idx, t, local, mut n)) = nearest_hit(scene, origin, dir, time) else {
        let far = add(origin, scale(dir, SKY_DEPTH));
        return Sample {
            color: scene.sky,
            albedo: [0.0; 3],
            roughness: 1.0,
            normal: scale(dir, -1.0),
            ndotv: 1.0,
            emissive: scene.sky,
            depth: SKY_DEPTH,
            motion: motion_of(add(far, sub(prev.position, camera.position))),
        };
    };
    let obj = &scene.objects[idx];
    let p = add(origin, scale(dir, t));
    let view = scale(dir, -1.0);
    if dot(n, view) < 0.0 {
        n = scale(n, -1.0);
    }
    if let Some(b) = &obj.material.bump {
        n = b.perturb(n, local);
    }
    let ndotv = dot(n, view).clamp(NDOTV_EPS, 1.0);
    let albedo = obj.material.albedo.eval(local).map(|c| c.clamp(0.0, 1.0));
    let roughness = obj.material.roughness_at(local);
    let alpha = alpha_from_roughness(roughness);
    let f0 = scene.f0.map(|f| f as f64);
    let kd = 1.0 - f0[0].max(f0[1]).max(f0[2]);

    let mut color = obj.material.emissive;
    for light in &scene.lights {
        let (l, e) = match *light {
            Light::Directional { direction, radiance } => (normalize(direction), radiance),
            Light::Point { position, intensity } => {
                let d = sub(position, p);
                let d2 = dot(d, d).max(1e-8);
                (normalize(d), scale(intensity, 1.0 / d2))
            }
        };
        let ndotl = dot(n, l);
        if ndotl <= 0.0 {
            continue;
        }
        let hv = normalize(add(l, view));
        let spec = ggx_specular_unit_fresnel(ndotv, ndotl, dot(n, hv).max(0.0), alpha);
        let fw = schlick_weight(dot(view, hv).max(0.0));
        for c in 0..3 {
            let fresnel = f0[c] + (1.0 - f0[c]) * fw;
            let specular = if obj.material.specular { fresnel * spec } else { 0.0 };
            color[c] += e[c] * ndotl * (kd * albedo[c] / PI + specular);
        }
    }
    Sample {
        color,
        albedo,
        roughness,
        normal: n,
        ndotv,
        emissive: obj.material.emissive,
        depth: dot(sub(p, origin), forward),
        motion: motion_of(sub(p, obj.velocity)),
    }
}

fn assemble(scene: &Scene, camera: Camera, frame_index: usize, w: usize, h: usize, samples: Vec<Sample>) -> FrameBundle {
    let plane = w * h;
    let s = |c| Shape::new(1, c, h, w);
    let mut color = vec![0f32; 3 * plane];
    let mut albedo = vec![0f32; 3 * plane];
    let mut normal = vec![0f32; 3 * plane];
    let mut emissive = vec![0f32; 3 * plane];
    let mut rough = vec![0f32; plane];
    let mut ndotv = vec![0f32; plane];
    let mut depth = vec![0f32; plane];
    let mut motion = vec![0f32; 2 * plane];
    for (p, smp) in samples.iter().enumerate() {
        for c in 0..3 {
            color[c * plane + p] = smp.color[c] as f32;
            albedo[c * plane + p] = smp.albedo[c] as f32;
            normal[c * plane + p] = smp.normal[c] as f32;
            emissive[c * plane + p] = smp.emissive[c] as f32;
        }
        rough[p] = smp.roughness as f32;
        ndotv[p] = smp.ndotv as f32;
        depth[p] = smp.depth as f32;
        motion[p] = smp.motion[0] as f32;
        motion[plane + p] = smp.motion[1] as f32;
    }
    let t = |c, d| Tensor::from_vec(s(c), d).expect("sized to plane");
    FrameBundle {
        color: t(3, color),
        gbuffer: ShadingGBuffer {
            albedo: t(3, albedo),
            roughness: t(1, rough),
            normal: t(3, normal),
            ndotv: t(1, ndotv),
            emissive: t(3, emissive),
            depth: t(1, depth),
            motion: t(2, motion),
            f0: scene.f0,
        },
        camera,
        frame_index,
    }
}

fn render(scene: &Scene, camera: &Camera, prev: &Camera, time: f64, frame_index: usize, w: usize, h: usize) -> FrameBundle {
    let samples: Vec<Sample> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| shade_sample(scene, camera, prev, time, x as f64, y as f64, w, h))
        .collect();
    assemble(scene, *camera, frame_index, w, h, samples)
}

/// Render a still frame at time 0 (object motion still yields motion vectors).
pub fn render_frame(scene: &Scene, camera: &Camera, width: usize, height: usize) -> FrameBundle {
    render(scene, camera, camera, 0.0, 0, width, height)
}

/// Render frame `index` of a camera path.
pub fn render_frame_at(scene: &Scene, path: &CameraPath, index: usize, width: usize, height: usize) -> FrameBundle {
    let t = index as f64;
    render(scene, &path.at(t), &path.at(t - 1.0), t, index, width, height)
}

fn box_downsample(hr: &FrameBundle, r: usize) -> FrameBundle {
    let pool = |t: &Tensor<f32>| crate::ops::avg_pool(t, r).expect("HR size divisible by r");
    let g = &hr.gbuffer;
    let mut normal = pool(&g.normal);
    let plane = normal.shape().plane();
    let nd = normal.data_mut();
    for p in 0..plane {
        let v = normalize([nd[p] as f64, nd[plane + p] as f64, nd[2 * plane + p] as f64]);
        for c in 0..3 {
            nd[c * plane + p] = v[c] as f32;
        }
    }
    FrameBundle {
        color: pool(&hr.color),
        gbuffer: ShadingGBuffer {
            albedo: pool(&g.albedo),
            roughness: pool(&g.roughness),
            normal,
            ndotv: pool(&g.ndotv).map(|v| v.clamp(NDOTV_EPS as f32, 1.0)),
            emissive: pool(&g.emissive),
            depth: pool(&g.depth),
            motion: pool(&g.motion).scale(1.0 / r as f32),
            f0: g.f0,
        },
        camera: hr.camera,
        frame_index: hr.frame_index,
    }
}

/// `(HR, LR)` bundles of frame `index`; `hr` is `(width, height)`.
pub fn render_pair_at(
    scene: &Scene,
    path: &CameraPath,
    index: usize,
    hr: (usize, usize),
    r: usize,
    mode: LrMode,
) -> (FrameBundle, FrameBundle) {
    assert!(r >= 1 && hr.0 % r == 0 && hr.1 % r == 0, "HR size must be divisible by r");
    let hr_frame = render_frame_at(scene, path, index, hr.0, hr.1);
    let lr = match mode {
        LrMode::Native => render_frame_at(scene, path, index, hr.0 / r, hr.1 / r),
        LrMode::Box => box_downsample(&hr_frame, r),
    };
    (hr_frame, lr)
}

pub fn render_pair(scene: &Scene, camera: &Camera, hr: (usize, usize), r: usize) -> (FrameBundle, FrameBundle) {
    render_pair_at(scene, &CameraPath::fixed(*camera), 0, hr, r, LrMode::Native)
}

/// Frames `0..n` of `path`, each as an `(HR, LR)` pair.
pub fn render_sequence(
    scene: &Scene,
    path: &CameraPath,
    n: usize,
    hr: (usize, usize),
    r: usize,
    mode: LrMode,
) -> Vec<(FrameBundle, FrameBundle)> {
    (0..n).map(|i| render_pair_at(scene, path, i, hr, r, mode)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::scene::{Material, Object, Primitive, Texture};

    fn plane_scene(emissive: Vec3, lights: Vec<Light>) -> Scene {
        Scene {
            objects: vec![Object {
                primitive: Primitive::Plane {
                    point: [0.0, 0.0, -3.0],
                    normal: [0.0, 0.0, 1.0],
                },
                material: Material {
                    albedo: Texture::Constant { color: [0.6, 0.4, 0.2] },
                    roughness: 0.5,
                    roughness_variation: 0.0,
                    emissive,
                    specular: false,
                    bump: None,
                },
                velocity: [0.0; 3],
            }],
            lights,
            sky: [0.0; 3],
            f0: [0.0; 3],
        }
    }

    #[test]
    fn emissive_plane_without_lights() {
        let s = plane_scene([0.3, 0.2, 0.1], vec![]);
        let f = render_frame(&s, &Camera::look_at([0.0; 3], [0.0, 0.0, -1.0], 40.0), 8, 8);
        assert!(f.color.data().chunks(64).zip([0.3f32, 0.2, 0.1]).all(|(c, e)| c.iter().all(|&v| v == e as f32)));
        f.gbuffer.validate().unwrap();
    }

    #[test]
    fn lambertian_plane_facing_light() {
        let s = plane_scene(
            [0.0; 3],
            vec![Light::Directional {
                direction: [0.0, 0.0, 1.0],
                radiance: [2.0; 3],
            }],
        );
        let f = render_frame(&s, &Camera::look_at([0.0; 3], [0.0, 0.0, -1.0], 40.0), 4, 4);
        // Fresnel-free surface: only the diffuse lobe remains.
        let px = f.color.at(0, 0, 1, 1) as f64;
        assert!((px - 0.6 * 2.0 / PI).abs() < 1e-6, "{px}");
    }
}
