use fusesr_core::dataset::{
    read_bundle, render_frame_at, render_sequence, write_bundle, CameraPath, Dataset, DatasetManifest, LrMode, Scene,
};
use fusesr_core::ops::warp_bilinear;
use fusesr_core::tensor::Tensor;

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn bundle_round_trips_through_disk() {
    let scene = Scene::generate(3);
    let frame = render_frame_at(&scene, &CameraPath::pan(4), 2, 24, 16);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&frame, dir.path()).unwrap();
    for f in ["color", "albedo", "roughness", "normal", "ndotv", "emissive", "depth", "motion"] {
        assert!(dir.path().join(format!("{f}.pfm")).exists(), "{f}");
    }
    let back = read_bundle(dir.path()).unwrap();
    assert_eq!(back.frame_index, 2);
    assert_eq!(back.camera, frame.camera);
    assert_eq!(bits(&back.color), bits(&frame.color));
    assert_eq!(bits(&back.gbuffer.motion), bits(&frame.gbuffer.motion));
    assert_eq!(bits(&back.gbuffer.normal), bits(&frame.gbuffer.normal));
    assert_eq!(back.gbuffer.f0, frame.gbuffer.f0);
}

#[test]
fn missing_channel_names_the_channel() {
    let scene = Scene::generate(5);
    let frame = render_frame_at(&scene, &CameraPath::pan(5), 0, 8, 8);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&frame, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("roughness.pfm")).unwrap();
    let err = read_bundle(dir.path()).unwrap_err().to_string();
    assert!(err.contains("roughness"), "{err}");
}

#[test]
fn dataset_round_trips_and_splits() {
    let ds = Dataset::generate(DatasetManifest::new(1, 2, 5, (16, 16), 2, LrMode::Native)).unwrap();
    assert_eq!(ds.manifest.train_frames, vec![0, 1, 2, 3]);
    assert_eq!(ds.manifest.test_frames, vec![4]);
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    let back = Dataset::read(dir.path()).unwrap();
    assert_eq!(back.manifest, ds.manifest);
    for ((h0, l0), (h1, l1)) in ds.frames.iter().zip(&back.frames) {
        assert_eq!(bits(&h0.color), bits(&h1.color));
        assert_eq!(bits(&l0.gbuffer.depth), bits(&l1.gbuffer.depth));
        assert_eq!((l1.width(), l1.height()), (8, 8));
    }
}

#[test]
fn generation_is_deterministic() {
    let a = render_sequence(&Scene::generate(9), &CameraPath::pan(9), 2, (16, 16), 4, LrMode::Box);
    let b = render_sequence(&Scene::generate(9), &CameraPath::pan(9), 2, (16, 16), 4, LrMode::Box);
    for ((ha, la), (hb, lb)) in a.iter().zip(&b) {
        assert_eq!(bits(&ha.color), bits(&hb.color));
        assert_eq!(bits(&la.color), bits(&lb.color));
    }
}

#[test]
fn static_scene_has_zero_motion() {
    let mut scene = Scene::generate(6);
    for o in &mut scene.objects {
        o.velocity = [0.0; 3];
    }
    let path = CameraPath::fixed(CameraPath::pan(6).start);
    let frame = render_frame_at(&scene, &path, 3, 32, 24);
    assert!(frame.gbuffer.motion.data().iter().all(|m| m.abs() < 1e-4));
}

#[test]
fn warping_previous_frame_matches_current_on_slow_pan() {
    let (w, h) = (512, 384);
    let scene = Scene::generate(21);
    let path = CameraPath::pan(22);
    let prev = render_frame_at(&scene, &path, 4, w, h);
    let cur = render_frame_at(&scene, &path, 5, w, h);
    let motion = &cur.gbuffer.motion;
    let warped = warp_bilinear(&prev.color, motion).unwrap();
    let warped_depth = warp_bilinear(&prev.gbuffer.depth, motion).unwrap();

    let plane = w * h;
    let (mut se, mut n) = (0.0f64, 0usize);
    for p in 0..plane {
        let (y, x) = (p / w, p % w);
        let sx = x as f32 + motion.data()[p];
        let sy = y as f32 + motion.data()[plane + p];
        let inside = sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f32 && sy <= (h - 1) as f32;
        let d = cur.gbuffer.depth.data()[p];
        let consistent = (warped_depth.data()[p] - d).abs() <= 0.02 * d.abs().max(1.0);
        if !(inside && consistent) {
            continue;
        }
        for c in 0..3 {
            let tm = |v: f32| (v.max(0.0) / (1.0 + v.max(0.0))) as f64;
            let e = tm(warped.data()[c * plane + p]) - tm(cur.color.data()[c * plane + p]);
            se += e * e;
        }
        n += 3;
    }
    assert!(n > plane * 3 / 2, "too few non-occluded pixels: {}", n / 3);
    let psnr = -10.0 * (se / n as f64).log10();
    assert!(psnr > 30.0, "warped PSNR {psnr:.2} dB");
}
