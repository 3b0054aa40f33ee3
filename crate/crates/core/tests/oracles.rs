mod common;

use common::*;
use fusesr_core::brdf::{integrate_cell, precompute_lut};
use fusesr_core::loss::{psnr, ssim, PSNR_CAP_DB};
use fusesr_core::ops::{conv2d_forward, Activation, ConvLayer, ConvVariant};
use fusesr_core::tensor::Tensor;
use rand::Rng;

fn random_layer(r: &mut rand_chacha::ChaCha8Rng, cin: usize, cout: usize, variant: ConvVariant) -> ConvLayer<f64> {
    let act = if r.gen_bool(0.5) { Activation::Relu } else { Activation::None };
    let mut layer = ConvLayer::new(cin, cout, variant, act);
    for (_, p) in layer.params_mut() {
        let s = p.shape().as_array();
        *p = random_tensor(r, s, -1.0, 1.0);
    }
    layer
}

#[test]
fn conv_matches_direct_sum() {
    let mut r = rng(11);
    for case in 0..40 {
        let variant = if case % 2 == 0 { ConvVariant::Standard } else { ConvVariant::DepthwiseSeparable };
        let (cin, cout) = (r.gen_range(1..6), r.gen_range(1..6));
        let (b, h, w) = (r.gen_range(1..3), r.gen_range(1..12), r.gen_range(1..12));
        let layer = random_layer(&mut r, cin, cout, variant);
        let x = random_tensor(&mut r, [b, cin, h, w], -1.0, 1.0);
        let got = conv2d_forward(&x, &layer).unwrap();
        let want = naive_conv(&x, &layer);
        for (g, e) in got.data().iter().zip(want.data()) {
            assert!((g - e).abs() <= 1e-9, "case {case}: {g} vs {e}");
        }
    }
}

#[test]
fn conv_handles_images_wider_than_one_tile() {
    let mut r = rng(12);
    let layer = random_layer(&mut r, 3, 4, ConvVariant::Standard);
    let x = random_tensor(&mut r, [1, 3, 70, 90], -1.0, 1.0);
    let got = conv2d_forward(&x, &layer).unwrap();
    let want = naive_conv(&x, &layer);
    let err = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
}

#[test]
fn lut_cells_agree_with_uniform_sampling() {
    for &(rough, ndotv) in &[(0.5, 0.5), (0.8, 0.2), (1.0, 0.9), (0.35, 0.75)] {
        let est = integrate_cell(rough, ndotv, 4096, 1);
        let (a, b) = uniform_hemisphere_ab(rough, ndotv, 1024, 2);
        assert!((est.scale - a).abs() < 5e-3, "A at ({rough}, {ndotv}): {} vs {a}", est.scale);
        assert!((est.bias - b).abs() < 5e-3, "B at ({rough}, {ndotv}): {} vs {b}", est.bias);
    }
}

#[test]
fn lut_respects_energy_bound() {
    let lut = precompute_lut(16, 16, 256, 4).unwrap();
    for e in lut.entries() {
        assert!(e[0] >= 0.0 && e[1] >= 0.0);
        assert!(e[0] + e[1] <= 1.0 + 1e-3, "{e:?}");
    }
}

#[test]
fn psnr_and_ssim_match_references() {
    let mut r = rng(13);
    for _ in 0..10 {
        let (h, w) = (r.gen_range(11..24), r.gen_range(11..24));
        let a = random_tensor(&mut r, [1, 3, h, w], 0.0, 1.0);
        let noise = r.gen_range(0.01..0.3);
        let b = Tensor::from_fn(a.shape(), |n, c, y, x| (a.at(n, c, y, x) + noise * (r.gen::<f64>() - 0.5)).clamp(0.0, 1.0));
        let p = psnr(&a, &b, PSNR_CAP_DB).unwrap();
        assert!((p - psnr_oracle(a.data(), b.data())).abs() < 1e-9);
        let s = ssim(&a, &b).unwrap();
        assert!((s - ssim_oracle(&a, &b)).abs() < 1e-9);
    }
}

#[test]
fn identical_images_hit_the_caps() {
    let a = random_tensor(&mut rng(14), [1, 3, 16, 16], 0.0, 1.0);
    assert_eq!(psnr(&a, &a, PSNR_CAP_DB).unwrap(), PSNR_CAP_DB);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}
