//! F_β maps and the demodulate / remodulate pair.

use super::gbuffer::{FbetaMode, ShadingGBuffer};
use super::lut::EnvBrdfLut;
use crate::error::{FuseError, Result};
use crate::ops::{elementwise_div, elementwise_mul};
use crate::tensor::{Scalar, Shape, Tensor};

/// Pre-integrated reflectance of one pixel for each color channel.
///
/// Specular part is `F0 * A + B`. The diffuse part, when enabled, adds
/// `(1 - s) * albedo` where `s` is the largest specular channel, which keeps the
/// total within the furnace bound for any `F0`.
pub fn fbeta_pixel(lut: &EnvBrdfLut, f0: [f32; 3], albedo: [f32; 3], roughness: f32, ndotv: f32, mode: FbetaMode) -> [f64; 3] {
    let (a, b) = lut.query(roughness as f64, ndotv as f64);
    let spec = f0.map(|f| f as f64 * a + b);
    match mode {
        FbetaMode::Specular => spec,
        FbetaMode::DiffuseSpecular => {
            let s = spec[0].max(spec[1]).max(spec[2]);
            let kd = (1.0 - s).max(0.0);
            [0, 1, 2].map(|c| spec[c] + kd * (albedo[c] as f64).clamp(0.0, 1.0))
        }
    }
}

pub fn build_fbeta_map<T: Scalar>(g: &ShadingGBuffer, lut: &EnvBrdfLut, mode: FbetaMode) -> Result<Tensor<T>> {
    g.validate()?;
    let (batch, h, w) = g.dims();
    let plane = h * w;
    let mut out = Tensor::zeros(Shape::new(batch, 3, h, w));
    for b in 0..batch {
        let albedo = g.albedo.item(b);
        let rough = g.roughness.item(b);
        let ndotv = g.ndotv.item(b);
        let dst = out.item_mut(b);
        for p in 0..plane {
            let alb = [albedo[p], albedo[plane + p], albedo[2 * plane + p]];
            let fb = fbeta_pixel(lut, g.f0, alb, rough[p], ndotv[p], mode);
            for c in 0..3 {
                dst[c * plane + p] = T::lit(fb[c]);
            }
        }
    }
    Ok(out)
}

/// `L_D = color / max(F_β, eps)`. Emissive must already be subtracted.
pub fn demodulate<T: Scalar>(color: &Tensor<T>, fbeta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    if color.shape() != fbeta.shape() {
        return Err(FuseError::shape("demodulate", fbeta.shape(), color.shape()));
    }
    elementwise_div(color, fbeta, eps)
}

/// `Î = F_β ⊙ L_D + emissive`.
pub fn remodulate<T: Scalar>(ld: &Tensor<T>, fbeta: &Tensor<T>, emissive: &Tensor<T>) -> Result<Tensor<T>> {
    if ld.shape() != fbeta.shape() {
        return Err(FuseError::shape("remodulate", fbeta.shape(), ld.shape()));
    }
    let mut out = elementwise_mul(ld, fbeta)?;
    out.add_assign(emissive)?;
    Ok(out)
}

/// Gradient of [`remodulate`] with respect to `ld`.
pub fn remodulate_backward<T: Scalar>(fbeta: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise_mul(grad_out, fbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::lut::precompute_lut;

    #[test]
    fn demodulate_examples() {
        let c = Tensor::<f64>::full([1, 3, 1, 1], 0.5);
        let f = Tensor::full([1, 3, 1, 1], 0.25);
        assert_eq!(demodulate(&c, &f, 1e-4).unwrap().data(), &[2.0; 3]);
        let one = Tensor::ones([1, 3, 1, 1]);
        assert_eq!(demodulate(&c, &one, 1e-4).unwrap(), c);
        let zero = Tensor::zeros([1, 3, 1, 1]);
        let ld = demodulate(&c, &zero, 1e-4).unwrap();
        assert!(ld.is_finite() && ld.data()[0] == 5000.0);
    }

    #[test]
    fn zero_ld_gives_emissive() {
        let e = Tensor::<f32>::full([1, 3, 2, 2], 0.7);
        let out = remodulate(&Tensor::zeros([1, 3, 2, 2]), &Tensor::ones([1, 3, 2, 2]), &e).unwrap();
        assert_eq!(out, e);
    }

    #[test]
    fn zero_f0_specular_map_is_bias() {
        let lut = precompute_lut(8, 8, 64, 1).unwrap();
        let g = ShadingGBuffer::uniform(1, 2, 2, 0.4, 0.6, [0.0; 3]);
        let m: Tensor<f64> = build_fbeta_map(&g, &lut, FbetaMode::Specular).unwrap();
        let (_, b) = lut.query(0.4f32 as f64, 0.6f32 as f64);
        assert!(m.data().iter().all(|&v| v == b));
    }

    #[test]
    fn diffuse_map_stays_within_furnace_bound() {
        let lut = precompute_lut(8, 8, 128, 1).unwrap();
        for &r in &[0.0, 0.5, 1.0] {
            for &v in &[0.01, 0.5, 1.0] {
                let fb = fbeta_pixel(&lut, [0.9, 0.1, 0.5], [1.0; 3], r, v, FbetaMode::DiffuseSpecular);
                assert!(fb.iter().all(|&x| (0.0..=1.0 + 1e-3).contains(&x)), "{fb:?}");
            }
        }
    }
}
