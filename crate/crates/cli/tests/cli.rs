use std::path::Path;
use std::process::{Command, Output};

use fusesr_core::dataset::read_pfm;
use fusesr_core::hnet::WEIGHTS_MAGIC;

fn fusesr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusesr"))
        .args(args)
        .env("FUSESR_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fusesr(args);
    assert!(
        out.status.success(),
        "fusesr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = fusesr(&["lut", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["lut", "gen", "train", "infer", "eval", "bench", "gradcheck"] {
        let text = ok(&[sub, "--help"]);
        assert!(text.contains("Usage"), "{sub}");
    }
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = fusesr(&["infer", "--model", missing.to_str().unwrap(), "--in", missing.to_str().unwrap(), "--out", "x.pfm"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_thread_cap_is_runtime_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_fusesr"))
        .args(["gradcheck", "--preset", "toy", "--r", "2", "--size", "4"])
        .env("FUSESR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn lut_file_has_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lut.bin");
    ok(&["lut", "--size", "8", "--samples", "64", "--seed", "3", "--out", path.to_str().unwrap()]);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..7], b"SSLUT01");
}

#[test]
fn gradcheck_lite_config_passes() {
    let cfg = configs().join("lite.json");
    let text = ok(&["gradcheck", "--config", cfg.to_str().unwrap()]);
    assert!(text.contains("all blocks pass"), "{text}");
}

#[test]
fn gen_train_infer_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    let pred = dir.path().join("pred.pfm");
    let csv = dir.path().join("metrics.csv");
    let d = data.to_str().unwrap();
    let m = model.to_str().unwrap();
    ok(&["gen", "--scene-seed", "5", "--frames", "5", "--hr", "64", "--r", "4", "--out", d]);
    assert!(data.join("hr/frame_00004/motion.pfm").exists());
    assert!(data.join("lr/frame_00000/manifest.json").exists());

    ok(&["train", "--data", d, "--preset", "toy", "--steps", "3", "--batch", "2", "--crop", "8", "--out", m]);
    let weights = std::fs::read(model.join("weights.bin")).unwrap();
    assert_eq!(&weights[..8], WEIGHTS_MAGIC);

    ok(&["infer", "--model", m, "--in", d, "--frame", "4", "--out", pred.to_str().unwrap()]);
    let img = read_pfm(&pred).unwrap();
    assert_eq!(img.shape().as_array(), [1, 3, 64, 64]);

    ok(&["eval", "--model", &format!("toy={m}"), "--data", d, "--out", csv.to_str().unwrap()]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,frame,psnr_db,ssim");
    assert!(lines.iter().any(|l| l.starts_with("toy,4,")));
    assert!(lines.iter().any(|l| l.starts_with("bicubic,mean,")));
}

#[test]
fn resume_continues_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let d = data.to_str().unwrap();
    ok(&["gen", "--scene-seed", "2", "--frames", "3", "--hr", "32", "--r", "2", "--out", d]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let common = ["--data", d, "--preset", "toy", "--batch", "1", "--crop", "8", "--lambda-p", "0"];
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--steps", "4", "--out", a.to_str().unwrap()]);
    ok(&args);
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--steps", "2", "--out", b.to_str().unwrap()]);
    ok(&args);
    ok(&["train", "--data", d, "--resume", b.to_str().unwrap(), "--steps", "4", "--out", b.to_str().unwrap()]);
    assert_eq!(
        std::fs::read(a.join("weights.bin")).unwrap(),
        std::fs::read(b.join("weights.bin")).unwrap()
    );
}

#[test]
fn bench_writes_timing_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let cfg = configs().join("toy.json");
    ok(&["bench", "--config", cfg.to_str().unwrap(), "--hr", "32", "--runs", "2", "--warmup", "0", "--out", out.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let r = &v["results"][0];
    assert_eq!(r["name"], "toy");
    assert!(r["median"]["total_ms"].as_f64().unwrap() > 0.0);
}
