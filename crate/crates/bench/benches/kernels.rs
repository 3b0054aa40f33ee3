use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fusesr_core::ops::{
    conv2d_forward, pixel_shuffle, pixel_unshuffle, warp_bilinear, Activation, ConvLayer, ConvVariant,
};
use fusesr_core::tensor::Tensor;

/// Hash-based fill in [-0.5, 0.5).
fn fill(shape: [usize; 4], salt: u32) -> Tensor<f32> {
    Tensor::from_fn(shape, |b, c, y, x| {
        let h = (b as u32).wrapping_mul(73856093)
            ^ (c as u32).wrapping_mul(19349663)
            ^ (y as u32).wrapping_mul(83492791)
            ^ (x as u32).wrapping_mul(2654435761)
            ^ salt;
        (h % 1000) as f32 / 1000.0 - 0.5
    })
}

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv3x3");
    let x = fill([1, 32, 64, 64], 1);
    for variant in [ConvVariant::Standard, ConvVariant::DepthwiseSeparable] {
        let mut layer = ConvLayer::<f32>::new(32, 32, variant, Activation::Relu);
        for (i, (_, p)) in layer.params_mut().into_iter().enumerate() {
            let s = p.shape().as_array();
            *p = fill(s, 10 + i as u32).scale(0.1);
        }
        g.bench_with_input(BenchmarkId::from_parameter(format!("{variant:?}")), &layer, |b, l| {
            b.iter(|| conv2d_forward(black_box(&x), l).unwrap())
        });
    }
    g.finish();
}

fn shuffle(c: &mut Criterion) {
    let mut g = c.benchmark_group("shuffle");
    for r in [2usize, 4, 8] {
        let x = fill([1, 16, 128, 128], r as u32);
        g.bench_with_input(BenchmarkId::new("unshuffle", r), &r, |b, &r| {
            b.iter(|| pixel_unshuffle(black_box(&x), r).unwrap())
        });
        let y = pixel_unshuffle(&x, r).unwrap();
        g.bench_with_input(BenchmarkId::new("shuffle", r), &r, |b, &r| {
            b.iter(|| pixel_shuffle(black_box(&y), r).unwrap())
        });
    }
    g.finish();
}

fn warp(c: &mut Criterion) {
    let x = fill([1, 8, 128, 128], 5);
    let motion: Tensor<f32> = fill([1, 2, 128, 128], 6).scale(4.0);
    c.bench_function("warp_bilinear", |b| b.iter(|| warp_bilinear(black_box(&x), &motion).unwrap()));
}

criterion_group!(benches, conv, shuffle, warp);
criterion_main!(benches);
