use serde::{Deserialize, Serialize};

use crate::error::{FuseError, Result};
use crate::tensor::{Shape, Tensor};

/// Per-pixel shading attributes at one resolution.
///
/// `f0` is the specular reflectance at normal incidence, shared by the whole
/// frame. A channel tensor with zero channels counts as missing.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadingGBuffer {
    pub albedo: Tensor<f32>,
    pub roughness: Tensor<f32>,
    pub normal: Tensor<f32>,
    pub ndotv: Tensor<f32>,
    pub emissive: Tensor<f32>,
    pub depth: Tensor<f32>,
    pub motion: Tensor<f32>,
    pub f0: [f32; 3],
}

/// Channel name and channel count, in storage order.
pub const GBUFFER_CHANNELS: [(&str, usize); 7] = [
    ("albedo", 3),
    ("roughness", 1),
    ("normal", 3),
    ("ndotv", 1),
    ("emissive", 3),
    ("depth", 1),
    ("motion", 2),
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbetaMode {
    Specular,
    #[default]
    DiffuseSpecular,
}

impl ShadingGBuffer {
    /// A flat, camera-facing surface: unit albedo, +z normals, zero motion.
    pub fn uniform(batch: usize, height: usize, width: usize, roughness: f32, ndotv: f32, f0: [f32; 3]) -> Self {
        let s = |c| Shape::new(batch, c, height, width);
        let mut normal = Tensor::zeros(s(3));
        for b in 0..batch {
            normal.plane_mut(b, 2).fill(1.0);
        }
        ShadingGBuffer {
            albedo: Tensor::ones(s(3)),
            roughness: Tensor::full(s(1), roughness),
            normal,
            ndotv: Tensor::full(s(1), ndotv),
            emissive: Tensor::zeros(s(3)),
            depth: Tensor::ones(s(1)),
            motion: Tensor::zeros(s(2)),
            f0,
        }
    }

    pub fn channel(&self, name: &str) -> Option<&Tensor<f32>> {
        Some(match name {
            "albedo" => &self.albedo,
            "roughness" => &self.roughness,
            "normal" => &self.normal,
            "ndotv" => &self.ndotv,
            "emissive" => &self.emissive,
            "depth" => &self.depth,
            "motion" => &self.motion,
            _ => return None,
        })
    }

    /// `(batch, height, width)` taken from the roughness channel.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.roughness.shape();
        (s.batch, s.height, s.width)
    }

    /// Check channel presence, counts, spatial agreement and value ranges.
    pub fn validate(&self) -> Result<()> {
        let (b, h, w) = self.dims();
        for (name, count) in GBUFFER_CHANNELS {
            let t = self.channel(name).expect("known channel");
            let s = t.shape();
            if s.channels == 0 || s.numel() == 0 && b * h * w != 0 {
                return Err(FuseError::schema(name, "missing"));
            }
            if s != Shape::new(b, count, h, w) {
                return Err(FuseError::schema(
                    name,
                    format!("expected {}, got {s}", Shape::new(b, count, h, w)),
                ));
            }
            if !t.is_finite() {
                return Err(FuseError::schema(name, "non-finite values"));
            }
        }
        if self.f0.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(FuseError::schema("f0", format!("{:?} outside [0, 1]", self.f0)));
        }
        if self.roughness.data().iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(FuseError::schema("roughness", "values outside [0, 1]"));
        }
        if self.ndotv.data().iter().any(|&v| v <= 0.0 || v > 1.0 + 1e-6) {
            return Err(FuseError::schema("ndotv", "values outside (0, 1]"));
        }
        if self.emissive.data().iter().any(|&e| e < 0.0) {
            return Err(FuseError::schema("emissive", "negative radiance"));
        }
        if self.depth.data().iter().any(|&d| d <= 0.0) {
            return Err(FuseError::schema("depth", "non-positive depth"));
        }
        let plane = h * w;
        for bi in 0..b {
            let n = self.normal.item(bi);
            for p in 0..plane {
                let len = (n[p].powi(2) + n[plane + p].powi(2) + n[2 * plane + p].powi(2)).sqrt();
                if (len - 1.0).abs() > 1e-3 {
                    return Err(FuseError::schema("normal", format!("length {len} at pixel {p}")));
                }
            }
        }
        Ok(())
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        Ok(ShadingGBuffer {
            albedo: self.albedo.crop(y0, x0, h, w)?,
            roughness: self.roughness.crop(y0, x0, h, w)?,
            normal: self.normal.crop(y0, x0, h, w)?,
            ndotv: self.ndotv.crop(y0, x0, h, w)?,
            emissive: self.emissive.crop(y0, x0, h, w)?,
            depth: self.depth.crop(y0, x0, h, w)?,
            motion: self.motion.crop(y0, x0, h, w)?,
            f0: self.f0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_buffer_is_valid() {
        ShadingGBuffer::uniform(1, 4, 4, 0.3, 0.8, [0.04; 3]).validate().unwrap();
    }

    #[test]
    fn missing_channel_is_named() {
        let mut g = ShadingGBuffer::uniform(1, 4, 4, 0.3, 0.8, [0.04; 3]);
        g.ndotv = Tensor::zeros([1, 0, 4, 4]);
        let err = g.validate().unwrap_err().to_string();
        assert!(err.contains("ndotv") && err.contains("missing"), "{err}");
    }

    #[test]
    fn non_unit_normal_rejected() {
        let mut g = ShadingGBuffer::uniform(1, 2, 2, 0.3, 0.8, [0.04; 3]);
        g.normal.data_mut()[0] = 0.5;
        assert!(g.validate().unwrap_err().to_string().contains("normal"));
    }
}
