//! Independent reference implementations shared by the integration tests.
//! Everything here is written for clarity, not speed.
#![allow(dead_code)]

use std::f64::consts::PI;

use fusesr_core::ops::{Activation, ConvKernel, ConvLayer};
use fusesr_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi))
}

/// Direct 3x3 zero-padded convolution, one output at a time.
pub fn naive_conv(x: &Tensor<f64>, layer: &ConvLayer<f64>) -> Tensor<f64> {
    let s = x.shape();
    let (h, w) = (s.height as isize, s.width as isize);
    let px = |b: usize, c: usize, y: isize, xx: isize| {
        if y < 0 || y >= h || xx < 0 || xx >= w {
            0.0
        } else {
            x.at(b, c, y as usize, xx as usize)
        }
    };
    Tensor::from_fn([s.batch, layer.out_channels, s.height, s.width], |b, o, y, xx| {
        let (y, xx) = (y as isize, xx as isize);
        let mut acc = layer.bias.at(0, o, 0, 0);
        match &layer.kernel {
            ConvKernel::Standard { weight } => {
                for i in 0..layer.in_channels {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            acc += weight.at(o, i, ky, kx) * px(b, i, y + ky as isize - 1, xx + kx as isize - 1);
                        }
                    }
                }
            }
            ConvKernel::DepthwiseSeparable { depthwise, pointwise } => {
                for i in 0..layer.in_channels {
                    let mut mid = 0.0;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            mid += depthwise.at(i, 0, ky, kx) * px(b, i, y + ky as isize - 1, xx + kx as isize - 1);
                        }
                    }
                    acc += pointwise.at(o, i, 0, 0) * mid;
                }
            }
        }
        match layer.activation {
            Activation::Relu => acc.max(0.0),
            Activation::None => acc,
        }
    })
}

/// Split-sum `(A, B)` by stratified uniform-hemisphere sampling of
/// `f_spec(v, l) cos θ_l`, with the Fresnel term split into `(1 - Fc)` and `Fc`.
pub fn uniform_hemisphere_ab(roughness: f64, ndotv: f64, strata: usize, seed: u64) -> (f64, f64) {
    let alpha = (roughness * roughness).max(1e-4);
    let a2 = alpha * alpha;
    let lambda = |c: f64| {
        let t2 = (1.0 - c * c).max(0.0) / (c * c);
        0.5 * (-1.0 + (1.0 + a2 * t2).sqrt())
    };
    let v = [(1.0 - ndotv * ndotv).sqrt(), 0.0, ndotv];
    let lv = lambda(ndotv);
    let mut r = rng(seed);
    let (mut sa, mut sb) = (0.0, 0.0);
    for i in 0..strata {
        for j in 0..strata {
            let u1 = (i as f64 + r.gen::<f64>()) / strata as f64;
            let u2 = (j as f64 + r.gen::<f64>()) / strata as f64;
            // Uniform over the hemisphere: cos θ uniform in [0, 1).
            let cos_t = u1;
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let phi = 2.0 * PI * u2;
            let l = [sin_t * phi.cos(), sin_t * phi.sin(), cos_t];
            if cos_t <= 0.0 {
                continue;
            }
            let hs = [v[0] + l[0], v[1] + l[1], v[2] + l[2]];
            let hn = (hs[0] * hs[0] + hs[1] * hs[1] + hs[2] * hs[2]).sqrt();
            let h = [hs[0] / hn, hs[1] / hn, hs[2] / hn];
            let ndoth = h[2];
            let vdoth = v[0] * h[0] + v[1] * h[1] + v[2] * h[2];
            let d = {
                let t = ndoth * ndoth * (a2 - 1.0) + 1.0;
                a2 / (PI * t * t)
            };
            let g = 1.0 / (1.0 + lv + lambda(cos_t));
            let f = d * g / (4.0 * ndotv * cos_t);
            let fc = (1.0 - vdoth).clamp(0.0, 1.0).powi(5);
            // Divide by the pdf 1 / (2π).
            let val = f * cos_t * 2.0 * PI;
            sa += (1.0 - fc) * val;
            sb += fc * val;
        }
    }
    let n = (strata * strata) as f64;
    (sa / n, sb / n)
}

pub fn psnr_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    -10.0 * mse.log10()
}

/// SSIM with an explicit 2-D Gaussian window at every position that fits.
pub fn ssim_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    const K: usize = 11;
    let sigma: f64 = 1.5;
    let mut win = [[0.0; K]; K];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let s = a.shape();
    let mut sum = 0.0;
    let mut count = 0usize;
    for bi in 0..s.batch {
        for c in 0..s.channels {
            for y in 0..=s.height - K {
                for x in 0..=s.width - K {
                    let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..K {
                        for j in 0..K {
                            let wgt = win[i][j] / total;
                            let p = a.at(bi, c, y + i, x + j);
                            let q = b.at(bi, c, y + i, x + j);
                            ma += wgt * p;
                            mb += wgt * q;
                            saa += wgt * p * p;
                            sbb += wgt * q * q;
                            sab += wgt * p * q;
                        }
                    }
                    let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                    sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1;
                }
            }
        }
    }
    sum / count as f64
}
