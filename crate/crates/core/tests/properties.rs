use fusesr_core::brdf::precompute_lut;
use fusesr_core::brdf::EnvBrdfLut;
use fusesr_core::dataset::{decode_pfm, encode_pfm};
use fusesr_core::hnet::{tensors_from_bytes, tensors_to_bytes};
use fusesr_core::ops::{avg_pool, pixel_shuffle, pixel_unshuffle};
use fusesr_core::tensor::Tensor;
use proptest::prelude::*;

/// `(r, tensor)` with spatial dims divisible by `r`.
fn shuffle_case() -> impl Strategy<Value = (usize, Tensor<f32>)> {
    (prop::sample::select(vec![1usize, 2, 4, 8]), 1usize..3, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(
        |(r, b, c, hm, wm)| {
            let shape = [b, c, hm * r, wm * r];
            let n = shape.iter().product::<usize>();
            prop::collection::vec(any::<f32>(), n)
                .prop_map(move |data| (r, Tensor::from_vec(shape, data).unwrap()))
        },
    )
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn shuffle_inverts_unshuffle((r, x) in shuffle_case()) {
        let down = pixel_unshuffle(&x, r).unwrap();
        let s = x.shape();
        prop_assert_eq!(down.shape().as_array(), [s.batch, s.channels * r * r, s.height / r, s.width / r]);
        let back = pixel_shuffle(&down, r).unwrap();
        prop_assert_eq!(back.shape(), s);
        prop_assert_eq!(bits(&back), bits(&x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pfm_round_trips(c in prop::sample::select(vec![1usize, 3]), h in 1usize..9, w in 1usize..9,
                       seed in any::<u64>()) {
        let mut state = seed;
        let x = Tensor::from_fn([1, c, h, w], |_, _, _, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f32::from_bits((state >> 32) as u32 & 0x7f7f_ffff) * if state & 1 == 0 { 1.0 } else { -1.0 }
        });
        let back = decode_pfm(&encode_pfm(&x).unwrap()).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        prop_assert_eq!(bits(&back), bits(&x));
    }

    #[test]
    fn weight_container_round_trips(shapes in prop::collection::vec((1usize..3, 1usize..4, 1usize..4, 1usize..4), 1..5),
                                    fill in -10.0f64..10.0) {
        let tensors: Vec<(String, Tensor<f64>)> = shapes
            .iter()
            .enumerate()
            .map(|(i, &(b, c, h, w))| {
                (format!("layer{i}.weight"), Tensor::from_fn([b, c, h, w], |n, ch, y, x| fill * (n + ch + y + x + i) as f64))
            })
            .collect();
        let named: Vec<(String, &Tensor<f64>)> = tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        let bytes = tensors_to_bytes(&named);
        let back = tensors_from_bytes::<f64>(&bytes).unwrap();
        prop_assert_eq!(back, tensors.clone());
        for cut in [0, 8, bytes.len() / 2, bytes.len() - 1] {
            prop_assert!(tensors_from_bytes::<f64>(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn avg_pool_preserves_mean(r in prop::sample::select(vec![1usize, 2, 4]), hm in 1usize..5, wm in 1usize..5,
                               v in prop::collection::vec(-4.0f64..4.0, 1..2)) {
        let x = Tensor::from_fn([1, 1, hm * r, wm * r], |_, _, y, xx| v[0] * (y * 7 + xx * 3) as f64);
        let p = avg_pool(&x, r).unwrap();
        prop_assert!((p.mean() - x.mean()).abs() < 1e-9 * (1.0 + x.mean().abs()));
    }
}

#[test]
fn lut_file_round_trips() {
    let lut = precompute_lut(5, 7, 32, 9).unwrap();
    let back = EnvBrdfLut::from_bytes(&lut.to_bytes()).unwrap();
    assert_eq!(back, lut);
    let mut bad = lut.to_bytes();
    bad[0] = b'X';
    assert!(EnvBrdfLut::from_bytes(&bad).is_err());
}
