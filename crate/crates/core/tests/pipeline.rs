use fusesr_core::brdf::{build_fbeta_map, demodulate, remodulate, FbetaMode, EnvBrdfLut};
use fusesr_core::dataset::{render_sequence, CameraPath, LrMode, Scene};
use fusesr_core::eval::{evaluate, frame_metrics, Method, CSV_HEADER};
use fusesr_core::hnet::{HNetConfig, HNetModel};
use fusesr_core::loss::PSNR_CAP_DB;
use fusesr_core::pipeline::{prepare_frame, super_resolve};

#[test]
fn demodulation_round_trips_on_rendered_frames() {
    let lut = EnvBrdfLut::default_table(0);
    let frames = render_sequence(&Scene::generate(31), &CameraPath::pan(32), 4, (48, 48), 4, LrMode::Native);
    for (hr, _) in &frames {
        let fb = build_fbeta_map::<f32>(&hr.gbuffer, &lut, FbetaMode::DiffuseSpecular).unwrap();
        let direct = hr.color.sub(&hr.gbuffer.emissive).unwrap();
        let ld = demodulate(&direct, &fb, 1e-4).unwrap();
        let back = remodulate(&ld, &fb, &hr.gbuffer.emissive).unwrap();
        for ((b, c), f) in back.data().iter().zip(hr.color.data()).zip(fb.data()) {
            if *f > 1e-3 {
                assert!((b - c).abs() <= 1e-5 * c.abs().max(1e-3), "{b} vs {c}");
            }
        }
    }
}

#[test]
fn model_output_has_hr_dims() {
    let lut = EnvBrdfLut::default_table(0);
    let frames = render_sequence(&Scene::generate(1), &CameraPath::pan(1), 3, (32, 24), 4, LrMode::Native);
    for cfg in [HNetConfig::toy(4), HNetConfig::lite(4)] {
        let model = HNetModel::<f32>::new(cfg, 0).unwrap();
        let f = prepare_frame(&frames, 2, model.config(), &lut).unwrap();
        let out = super_resolve(&model, &f).unwrap();
        assert_eq!(out.shape().as_array(), [1, 3, 24, 32]);
    }
}

#[test]
fn perfect_prediction_hits_metric_caps() {
    let frames = render_sequence(&Scene::generate(2), &CameraPath::pan(2), 1, (32, 32), 4, LrMode::Native);
    let hr = &frames[0].0.color;
    let (p, s) = frame_metrics(hr, hr).unwrap();
    assert_eq!(p, PSNR_CAP_DB);
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn csv_aggregates_equal_row_means() {
    let lut = EnvBrdfLut::default_table(0);
    let frames = render_sequence(&Scene::generate(3), &CameraPath::pan(3), 4, (32, 32), 4, LrMode::Native);
    let model = HNetModel::<f32>::new(HNetConfig::toy(4), 1).unwrap();
    let report = evaluate(
        &[Method::Model { name: "toy", model: &model }, Method::Bicubic, Method::Bilinear],
        &frames,
        &[1, 2, 3],
        &lut,
    )
    .unwrap();
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 3 + 3);
    for method in ["toy", "bicubic", "bilinear"] {
        let per: Vec<f64> = rows
            .iter()
            .filter(|r| r[0] == method && r[1] != "mean")
            .map(|r| r[2].parse().unwrap())
            .collect();
        let mean: f64 = rows.iter().find(|r| r[0] == method && r[1] == "mean").unwrap()[2].parse().unwrap();
        assert_eq!(per.len(), 3);
        assert_eq!(mean, per.iter().sum::<f64>() / 3.0);
    }
}
