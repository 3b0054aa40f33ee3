//! SSIM over an 11x11 Gaussian window (σ = 1.5), evaluated at every window
//! position that fits inside the image.

use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Shape, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable valid-mode filtering of an `h x w` plane.
fn filter(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter`]: scatters an `(h-10) x (w-10)` map back to `h x w`.
fn filter_adjoint(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for i in 0..SSIM_WINDOW {
                rows[(y + i) * ow + x] += k[i] * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..ow {
            let v = rows[y * ow + x];
            for i in 0..SSIM_WINDOW {
                out[y * w + x + i] += k[i] * v;
            }
        }
    }
    out
}

fn check<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Shape> {
    let s = a.shape();
    if b.shape() != s {
        return Err(FuseError::shape(op, s, b.shape()));
    }
    if s.height < SSIM_WINDOW || s.width < SSIM_WINDOW {
        return Err(FuseError::shape(op, format!("at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"), s));
    }
    Ok(s)
}

struct Moments {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    aa: Vec<f64>,
    bb: Vec<f64>,
    ab: Vec<f64>,
}

fn moments(a: &[f64], b: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Moments {
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    Moments {
        mu_a: filter(a, h, w, k),
        mu_b: filter(b, h, w, k),
        aa: filter(&sq(a, a), h, w, k),
        bb: filter(&sq(b, b), h, w, k),
        ab: filter(&sq(a, b), h, w, k),
    }
}

/// `(A1, A2, B1, B2)` with SSIM = `A1 A2 / (B1 B2)`.
fn terms(m: &Moments, i: usize) -> (f64, f64, f64, f64) {
    let (ma, mb) = (m.mu_a[i], m.mu_b[i]);
    let a1 = 2.0 * (ma * mb) + SSIM_C1;
    let a2 = 2.0 * (m.ab[i] - ma * mb) + SSIM_C2;
    let b1 = (ma * ma + mb * mb) + SSIM_C1;
    let b2 = (m.aa[i] - ma * ma) + (m.bb[i] - mb * mb) + SSIM_C2;
    (a1, a2, b1, b2)
}

/// Per-channel SSIM map of shape `(b, c, h-10, w-10)`.
pub fn ssim_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<f64>> {
    let s = check("ssim_map", a, b)?;
    let k = gaussian_taps();
    let (oh, ow) = (s.height + 1 - SSIM_WINDOW, s.width + 1 - SSIM_WINDOW);
    let mut out = Tensor::zeros(Shape::new(s.batch, s.channels, oh, ow));
    for bi in 0..s.batch {
        for c in 0..s.channels {
            let pa: Vec<f64> = a.plane(bi, c).iter().map(|v| v.as_f64()).collect();
            let pb: Vec<f64> = b.plane(bi, c).iter().map(|v| v.as_f64()).collect();
            let m = moments(&pa, &pb, s.height, s.width, &k);
            for (i, o) in out.plane_mut(bi, c).iter_mut().enumerate() {
                let (a1, a2, b1, b2) = terms(&m, i);
                *o = (a1 * a2) / (b1 * b2);
            }
        }
    }
    Ok(out)
}

/// Mean SSIM over all channels and window positions.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let m = ssim_map(a, b)?;
    Ok(m.data().iter().sum::<f64>() / m.data().len() as f64)
}

/// `1 - mean SSIM` and its gradient with respect to `a`.
pub fn ssim_loss<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let s = check("ssim_loss", a, b)?;
    let k = gaussian_taps();
    let (h, w) = (s.height, s.width);
    let n_out = (s.batch * s.channels * (h + 1 - SSIM_WINDOW) * (w + 1 - SSIM_WINDOW)) as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(s);
    for bi in 0..s.batch {
        for c in 0..s.channels {
            let pa: Vec<f64> = a.plane(bi, c).iter().map(|v| v.as_f64()).collect();
            let pb: Vec<f64> = b.plane(bi, c).iter().map(|v| v.as_f64()).collect();
            let m = moments(&pa, &pb, h, w, &k);
            let n = m.mu_a.len();
            let (mut g_mu, mut g_aa, mut g_ab) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                let (a1, a2, b1, b2) = terms(&m, i);
                let ssim = (a1 * a2) / (b1 * b2);
                total += ssim;
                let (ma, mb) = (m.mu_a[i], m.mu_b[i]);
                // d(-ssim / n_out) with respect to the filtered moments of `a`.
                let scale = -ssim / n_out;
                g_mu[i] = scale * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2);
                g_aa[i] = scale * (-1.0 / b2);
                g_ab[i] = scale * (2.0 / a2);
            }
            let d_mu = filter_adjoint(&g_mu, h, w, &k);
            let d_aa = filter_adjoint(&g_aa, h, w, &k);
            let d_ab = filter_adjoint(&g_ab, h, w, &k);
            for (p, g) in grad.plane_mut(bi, c).iter_mut().enumerate() {
                *g = T::lit(d_mu[p] + 2.0 * pa[p] * d_aa[p] + pb[p] * d_ab[p]);
            }
        }
    }
    Ok((1.0 - total / n_out, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_score_exactly_one() {
        let a = Tensor::<f32>::from_fn([1, 3, 16, 12], |_, c, y, x| ((c + y * 7 + x * 3) % 11) as f32 / 10.0);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(ssim_loss(&a, &a).unwrap().0, 0.0);
    }

    #[test]
    fn inverted_image_scores_below_one() {
        let a = Tensor::<f64>::from_fn([1, 1, 12, 12], |_, _, y, x| if (x + y) % 2 == 0 { 0.9 } else { 0.2 });
        let b = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &b).unwrap() < 1.0);
    }

    #[test]
    fn adjoint_matches_filter() {
        let k = gaussian_taps();
        let (h, w) = (13, 14);
        let x: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 17) as f64 / 17.0).collect();
        let y: Vec<f64> = (0..(h - 10) * (w - 10)).map(|i| ((i * 11) % 7) as f64 / 7.0).collect();
        let lhs: f64 = filter(&x, h, w, &k).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = filter_adjoint(&y, h, w, &k).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn small_image_rejected() {
        let a = Tensor::<f32>::zeros([1, 1, 8, 8]);
        assert!(ssim(&a, &a).is_err());
    }
}
