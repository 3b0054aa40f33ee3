//! Per-frame tone-mapped PSNR/SSIM for models and upsampling baselines.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::brdf::EnvBrdfLut;
use crate::dataset::FrameBundle;
use crate::error::Result;
use crate::hnet::HNetModel;
use crate::loss::{psnr, ssim, tonemap, PSNR_CAP_DB};
use crate::pipeline::{bicubic_upsample, bilinear_upsample, prepare_frame, super_resolve};
use crate::tensor::Tensor;

pub const CSV_HEADER: &str = "method,frame,psnr_db,ssim";

/// What to evaluate: a trained model or a classical upsampler.
#[derive(Clone, Copy, Debug)]
pub enum Method<'a> {
    Model { name: &'a str, model: &'a HNetModel<f32> },
    Bicubic,
    Bilinear,
}

impl Method<'_> {
    pub fn name(&self) -> &str {
        match self {
            Method::Model { name, .. } => name,
            Method::Bicubic => "bicubic",
            Method::Bilinear => "bilinear",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub frame: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    pub mean_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Wall-clock inference time per frame; kept out of the CSV.
    pub timings: Vec<MethodTiming>,
}

/// Tone-map both images, then PSNR (capped) and mean SSIM.
pub fn frame_metrics(pred: &Tensor<f32>, target: &Tensor<f32>) -> Result<(f64, f64)> {
    let (p, t) = (tonemap(pred), tonemap(target));
    Ok((psnr(&p, &t, PSNR_CAP_DB)?, ssim(&p, &t)?))
}

impl EvalReport {
    /// Method names in first-seen order.
    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method.as_str()) {
                out.push(&r.method);
            }
        }
        out
    }

    /// Mean `(psnr_db, ssim)` over a method's rows.
    pub fn aggregate(&self, method: &str) -> Option<(f64, f64)> {
        let rows: Vec<&EvalRow> = self.rows.iter().filter(|r| r.method == method).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        ))
    }

    pub fn mean_psnr(&self, method: &str) -> f64 {
        self.aggregate(method).map_or(f64::NAN, |a| a.0)
    }

    /// One row per frame and method, then a `mean` row per method. Values use
    /// the shortest round-trip representation so they parse back exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.method, r.frame, r.psnr_db, r.ssim).expect("string write");
        }
        for m in self.methods() {
            let (p, q) = self.aggregate(m).expect("method has rows");
            writeln!(s, "{m},mean,{p},{q}").expect("string write");
        }
        s
    }
}

/// Evaluate `methods` on frames `indices` of a sequence of `(HR, LR)` pairs.
pub fn evaluate(
    methods: &[Method<'_>],
    frames: &[(FrameBundle, FrameBundle)],
    indices: &[usize],
    lut: &EnvBrdfLut,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for m in methods {
        let mut elapsed = 0.0;
        for &t in indices {
            let (hr, lr) = &frames[t];
            let r = hr.width() / lr.width().max(1);
            let start = Instant::now();
            let pred = match m {
                Method::Model { model, .. } => {
                    let f = prepare_frame(frames, t, model.config(), lut)?;
                    super_resolve(model, &f)?
                }
                Method::Bicubic => bicubic_upsample(&lr.color, r)?,
                Method::Bilinear => bilinear_upsample(&lr.color, r)?,
            };
            elapsed += start.elapsed().as_secs_f64() * 1e3;
            let (psnr_db, ssim) = frame_metrics(&pred, &hr.color)?;
            report.rows.push(EvalRow {
                method: m.name().to_string(),
                frame: t,
                psnr_db,
                ssim,
            });
        }
        report.timings.push(MethodTiming {
            method: m.name().to_string(),
            mean_ms: elapsed / indices.len().max(1) as f64,
        });
    }
    Ok(report)
}
