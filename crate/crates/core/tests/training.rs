use fusesr_core::brdf::EnvBrdfLut;
use fusesr_core::dataset::{Dataset, DatasetManifest, LrMode};
use fusesr_core::eval::frame_metrics;
use fusesr_core::hnet::HNetConfig;
use fusesr_core::loss::{l1_loss, tonemap_signed, LossWeights};
use fusesr_core::brdf::remodulate_backward;
use fusesr_core::pipeline::{prepare_frame, super_resolve};
use fusesr_core::tensor::Tensor;
use fusesr_core::train::{adam_step, TrainData, TrainOptions, TrainRun};
use fusesr_core::FuseError;

fn small_dataset(frames: usize, hr: usize) -> Dataset {
    Dataset::generate(DatasetManifest::new(4, 5, frames, (hr, hr), 4, LrMode::Native)).unwrap()
}

fn lut() -> EnvBrdfLut {
    fusesr_core::brdf::precompute_lut(16, 16, 128, 0).unwrap()
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn options(steps: usize, loss: LossWeights) -> TrainOptions {
    TrainOptions {
        steps,
        batch: 2,
        crop: 8,
        loss,
        seed: 3,
        log_every: 0,
        ..Default::default()
    }
}

#[test]
fn l1_only_first_step_matches_hand_built_step() {
    let ds = small_dataset(3, 32);
    let lut = lut();
    let cfg = HNetConfig::toy(4);
    let data = TrainData::new(&ds.frames, &[0, 1], &cfg, &lut).unwrap();
    let mut run = TrainRun::new(cfg, options(1, LossWeights::l1_only())).unwrap();
    let mut model = run.model.clone();
    let mut state = run.adam.clone();
    let loss = run.train_step(&data).unwrap();

    let batch = data.batch(3, 0, 2, 8).unwrap();
    let trace = model.forward_trace(&batch.input).unwrap();
    let color = batch.compose(&trace.output).unwrap();
    let (pred, dpred) = tonemap_signed(&color);
    let (target, _) = tonemap_signed(&batch.target);
    let (l1, g) = l1_loss(&pred, &target).unwrap();
    let g = g.zip_map(&dpred, "chain", |a, b| a * b).unwrap();
    let g = remodulate_backward(batch.fbeta_hr.as_ref().unwrap(), &g).unwrap();
    let (grads, _) = model.backward(&trace, &g).unwrap();
    adam_step(&mut model.params_mut(), &grads, &mut state, &run.options.adam).unwrap();

    assert_eq!(loss, l1);
    for ((name, a), (_, b)) in run.model.params().iter().zip(model.params()) {
        assert_eq!(bits(a), bits(b), "{name}");
    }
}

#[test]
fn resumed_run_is_bitwise_identical() {
    let ds = small_dataset(3, 32);
    let lut = lut();
    let cfg = HNetConfig::toy(4);
    let data = TrainData::new(&ds.frames, &[0, 1], &cfg, &lut).unwrap();

    let mut straight = TrainRun::new(cfg.clone(), options(6, LossWeights::default())).unwrap();
    straight.run(&data, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = TrainRun::new(cfg, options(3, LossWeights::default())).unwrap();
    first.run(&data, Some(dir.path())).unwrap();
    let mut resumed = TrainRun::load_checkpoint(dir.path()).unwrap();
    assert_eq!(resumed.step, 3);
    resumed.options.steps = 6;
    resumed.run(&data, None).unwrap();

    assert_eq!(resumed.loss_history, straight.loss_history);
    for ((name, a), (_, b)) in resumed.model.params().iter().zip(straight.model.params()) {
        assert_eq!(bits(a), bits(b), "{name}");
    }
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let ds = small_dataset(2, 32);
    let lut = lut();
    let cfg = HNetConfig::toy(4);
    let data = TrainData::new(&ds.frames, &[0], &cfg, &lut).unwrap();
    let mut run = TrainRun::new(cfg, options(5, LossWeights::l1_only())).unwrap();
    run.model.params_mut()[0].data_mut()[0] = f32::NAN;
    match run.run(&data, None) {
        Err(e @ FuseError::NonFinite { .. }) => assert!(e.to_string().contains("norms"), "{e}"),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    assert_eq!(run.step, 0);
}

#[test]
fn overfits_two_frames() {
    let ds = small_dataset(2, 64);
    let lut = lut();
    let cfg = HNetConfig::toy(4);
    let data = TrainData::new(&ds.frames, &[0, 1], &cfg, &lut).unwrap();
    let mut run = TrainRun::new(
        cfg,
        TrainOptions {
            steps: 2000,
            batch: 2,
            crop: 16,
            log_every: 0,
            ..Default::default()
        },
    )
    .unwrap();
    run.run(&data, None).unwrap();
    for t in 0..2 {
        let f = prepare_frame(&ds.frames, t, run.model.config(), &lut).unwrap();
        let pred = super_resolve(&run.model, &f).unwrap();
        let (psnr, _) = frame_metrics(&pred, &ds.frames[t].0.color).unwrap();
        assert!(psnr > 38.0, "frame {t}: {psnr:.2} dB");
    }
}
