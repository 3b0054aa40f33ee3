//! Classical upsampling baselines. HR pixel `x` samples LR coordinate
//! `(x + 0.5) / r - 0.5`, with edge clamping.

use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Keys cubic convolution kernel with `a = -0.5`.
fn cubic(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Per output coordinate: source indices and weights.
fn taps(n_in: usize, r: usize, support: isize, kernel: fn(f64) -> f64) -> Vec<Vec<(usize, f64)>> {
    (0..n_in * r)
        .map(|o| {
            let src = (o as f64 + 0.5) / r as f64 - 0.5;
            let base = src.floor() as isize;
            (base - support + 1..=base + support)
                .map(|i| {
                    let w = kernel(src - i as f64);
                    (i.clamp(0, n_in as isize - 1) as usize, w)
                })
                .filter(|&(_, w)| w != 0.0)
                .collect()
        })
        .collect()
}

fn separable<T: Scalar>(x: &Tensor<T>, r: usize, support: isize, kernel: fn(f64) -> f64) -> Result<Tensor<T>> {
    if r == 0 {
        return Err(FuseError::Config("upsampling factor must be positive".into()));
    }
    let s = x.shape();
    let tx = taps(s.width, r, support, kernel);
    let ty = taps(s.height, r, support, kernel);
    let (h, w) = (s.height * r, s.width * r);
    let mut out = Tensor::zeros(Shape::new(s.batch, s.channels, h, w));
    let mut rows = vec![0.0f64; s.height * w];
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = x.plane(b, c);
            for y in 0..s.height {
                for (ox, tap) in tx.iter().enumerate() {
                    rows[y * w + ox] = tap.iter().map(|&(i, wt)| wt * src[y * s.width + i].as_f64()).sum();
                }
            }
            let dst = out.plane_mut(b, c);
            for (oy, tap) in ty.iter().enumerate() {
                for ox in 0..w {
                    let v: f64 = tap.iter().map(|&(i, wt)| wt * rows[i * w + ox]).sum();
                    dst[oy * w + ox] = T::lit(v);
                }
            }
        }
    }
    Ok(out)
}

pub fn bicubic_upsample<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    separable(x, r, 2, cubic)
}

pub fn bilinear_upsample<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    separable(x, r, 1, |t| (1.0 - t.abs()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let x = Tensor::<f32>::full([1, 3, 5, 7], 0.37);
        for r in [1, 2, 4] {
            for up in [bicubic_upsample(&x, r).unwrap(), bilinear_upsample(&x, r).unwrap()] {
                assert_eq!(up.shape(), Shape::new(1, 3, 5 * r, 7 * r));
                assert!(up.data().iter().all(|&v| (v - 0.37).abs() < 1e-7));
            }
        }
    }

    #[test]
    fn factor_one_is_identity() {
        let x = Tensor::from_fn([1, 1, 4, 4], |_, _, y, x| (y * 4 + x) as f64);
        assert_eq!(bicubic_upsample(&x, 1).unwrap(), x);
        assert_eq!(bilinear_upsample(&x, 1).unwrap(), x);
    }

    #[test]
    fn bilinear_reproduces_linear_ramp_inside() {
        let x = Tensor::from_fn([1, 1, 1, 8], |_, _, _, x| x as f64);
        let up = bilinear_upsample(&x, 2).unwrap();
        // Output x=3 sits at source 1.25.
        assert!((up.at(0, 0, 0, 3) - 1.25).abs() < 1e-12);
    }
}
