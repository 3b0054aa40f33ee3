//! Adam training on random crops with resumable checkpoints.

mod adam;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamHyper, AdamState};

use crate::brdf::{mix_seed, remodulate_backward, EnvBrdfLut};
use crate::dataset::FrameBundle;
use crate::error::{FuseError, Result};
use crate::hnet::{load_model_dir, save_model_dir, tensors_from_bytes, tensors_to_bytes, HNetConfig, HNetModel};
use crate::loss::{total_loss, tonemap_signed, FeatureExtractor, LossWeights};
use crate::pipeline::{prepare_frame, FrameFeatures};
use crate::tensor::Tensor;

/// Seed of the frozen perceptual feature extractor.
pub const EXTRACTOR_SEED: u64 = 0x5EED_F00D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch: usize,
    /// LR crop side; the HR crop is `r` times larger.
    pub crop: usize,
    pub adam: AdamHyper,
    pub loss: LossWeights,
    pub seed: u64,
    /// Save a checkpoint every this many steps (0 disables).
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 1000,
            batch: 4,
            crop: 64,
            adam: AdamHyper::default(),
            loss: LossWeights::default(),
            seed: 0,
            checkpoint_every: 0,
            log_every: 50,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch == 0 || self.crop == 0 {
            return Err(FuseError::Config("batch and crop must be positive".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(FuseError::Config(format!("invalid Adam hyperparameters {a:?}")));
        }
        Ok(())
    }
}

/// Full-frame features of the training frames, cropped on demand.
pub struct TrainData {
    frames: Vec<FrameFeatures>,
    r: usize,
}

impl TrainData {
    /// `indices` select training frames; with history enabled, frames that
    /// lack two predecessors are skipped when enough others remain.
    pub fn new(
        sequence: &[(FrameBundle, FrameBundle)],
        indices: &[usize],
        config: &HNetConfig,
        lut: &EnvBrdfLut,
    ) -> Result<Self> {
        let need = if config.use_history { config.history_frames } else { 0 };
        let mut chosen: Vec<usize> = indices.iter().copied().filter(|&i| i >= need).collect();
        if chosen.is_empty() {
            chosen = indices.to_vec();
        }
        if chosen.is_empty() {
            return Err(FuseError::Config("no training frames".into()));
        }
        let frames = chosen
            .iter()
            .map(|&t| prepare_frame(sequence, t, config, lut))
            .collect::<Result<_>>()?;
        Ok(TrainData { frames, r: config.r })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The batch for `step`. Crop positions come from a stream keyed by
    /// `(seed, step)`, so any step can be reproduced in isolation.
    pub fn batch(&self, seed: u64, step: usize, batch: usize, crop: usize) -> Result<FrameFeatures> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, step as u64));
        let picks: Vec<(usize, usize, usize, usize, usize)> = (0..batch)
            .map(|_| {
                let f = rng.gen_range(0..self.frames.len());
                let s = self.frames[f].input.ld_lr.shape();
                let (ch, cw) = (crop.min(s.height), crop.min(s.width));
                let y = rng.gen_range(0..=s.height - ch);
                let x = rng.gen_range(0..=s.width - cw);
                (f, y, x, ch, cw)
            })
            .collect();
        let items = picks
            .par_iter()
            .map(|&(f, y, x, h, w)| self.frames[f].crop(self.r, y, x, h, w))
            .collect::<Result<Vec<_>>>()?;
        FrameFeatures::stack(&items)
    }
}

/// Loss value and parameter gradients for one batch.
pub fn loss_and_grads(
    model: &HNetModel<f32>,
    batch: &FrameFeatures,
    weights: &LossWeights,
    fx: &FeatureExtractor<f32>,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    let trace = model.forward_trace(&batch.input)?;
    let color = batch.compose(&trace.output)?;
    let (pred, dpred) = tonemap_signed(&color);
    let (target, _) = tonemap_signed(&batch.target);
    let loss = total_loss(&pred, &target, weights, fx)?;
    let g_color = loss.grad.zip_map(&dpred, "tonemap backward", |g, d| g * d)?;
    let g_out = match &batch.fbeta_hr {
        Some(fb) => remodulate_backward(fb, &g_color)?,
        None => g_color,
    };
    let (grads, _) = model.backward(&trace, &g_out)?;
    Ok((loss.total, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RunRecord {
    options: TrainOptions,
    step: usize,
    adam_step: u64,
    loss_history: Vec<f64>,
}

/// A model being trained, with everything needed to resume it exactly.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub options: TrainOptions,
    pub model: HNetModel<f32>,
    pub adam: AdamState<f32>,
    pub step: usize,
    pub loss_history: Vec<f64>,
    fx: FeatureExtractor<f32>,
}

impl TrainRun {
    /// Fresh run; weights are initialized from `options.seed`.
    pub fn new(config: HNetConfig, options: TrainOptions) -> Result<Self> {
        options.validate()?;
        let model = HNetModel::new(config, options.seed)?;
        Ok(Self::from_model(model, options))
    }

    pub fn from_model(model: HNetModel<f32>, options: TrainOptions) -> Self {
        let adam = AdamState::new(model.params().into_iter().map(|p| p.1));
        TrainRun {
            options,
            model,
            adam,
            step: 0,
            loss_history: Vec::new(),
            fx: FeatureExtractor::seeded(EXTRACTOR_SEED),
        }
    }

    pub fn epoch(&self, train_frames: usize) -> usize {
        self.step * self.options.batch / train_frames.max(1)
    }

    fn diagnostics(&self) -> String {
        self.model
            .params()
            .iter()
            .map(|(n, t)| format!("{n}={:.4e}", t.norm()))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Run one optimization step and return its loss.
    pub fn train_step(&mut self, data: &TrainData) -> Result<f64> {
        let o = &self.options;
        let batch = data.batch(o.seed, self.step, o.batch, o.crop)?;
        let (loss, grads) = loss_and_grads(&self.model, &batch, &o.loss, &self.fx)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(FuseError::NonFinite {
                step: self.step,
                diagnostics: format!("loss={loss}; parameter norms: {}", self.diagnostics()),
            });
        }
        let hyper = o.adam;
        adam_step(&mut self.model.params_mut(), &grads, &mut self.adam, &hyper)?;
        self.step += 1;
        self.loss_history.push(loss);
        Ok(loss)
    }

    /// Train until `options.steps`, checkpointing into `checkpoint_dir` if set.
    pub fn run(&mut self, data: &TrainData, checkpoint_dir: Option<&Path>) -> Result<()> {
        while self.step < self.options.steps {
            let loss = self.train_step(data)?;
            let every = self.options.log_every;
            if every > 0 && self.step % every == 0 {
                let n = every.min(self.loss_history.len());
                let avg = self.loss_history[self.loss_history.len() - n..].iter().sum::<f64>() / n as f64;
                log::info!("step {} loss {loss:.5} (avg {avg:.5}, epoch {})", self.step, self.epoch(data.len()));
            }
            let ck = self.options.checkpoint_every;
            if let Some(dir) = checkpoint_dir {
                if (ck > 0 && self.step % ck == 0) || self.step == self.options.steps {
                    self.save_checkpoint(dir)?;
                }
            }
        }
        Ok(())
    }

    /// Writes `model.json`, `weights.bin`, `optimizer.bin` and `run.json`.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        save_model_dir(&self.model, dir)?;
        let names: Vec<String> = self.model.params().into_iter().map(|p| p.0).collect();
        let mut named = Vec::with_capacity(2 * names.len());
        for (n, t) in names.iter().zip(&self.adam.m) {
            named.push((format!("m.{n}"), t));
        }
        for (n, t) in names.iter().zip(&self.adam.v) {
            named.push((format!("v.{n}"), t));
        }
        let opt = dir.join("optimizer.bin");
        std::fs::write(&opt, tensors_to_bytes(&named)).map_err(|e| FuseError::io(&opt, e))?;
        let record = RunRecord {
            options: self.options.clone(),
            step: self.step,
            adam_step: self.adam.step,
            loss_history: self.loss_history.clone(),
        };
        let path = dir.join("run.json");
        std::fs::write(&path, serde_json::to_string_pretty(&record)?).map_err(|e| FuseError::io(&path, e))
    }

    pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let model = load_model_dir::<f32>(dir)?;
        let path = dir.join("run.json");
        let text = std::fs::read_to_string(&path).map_err(|e| FuseError::io(&path, e))?;
        let record: RunRecord =
            serde_json::from_str(&text).map_err(|e| FuseError::Format(format!("{}: {e}", path.display())))?;
        let opt = dir.join("optimizer.bin");
        let bytes = std::fs::read(&opt).map_err(|e| FuseError::io(&opt, e))?;
        let loaded = tensors_from_bytes::<f32>(&bytes)?;
        let n = model.params().len();
        if loaded.len() != 2 * n {
            return Err(FuseError::Format(format!("optimizer state holds {} tensors, expected {}", loaded.len(), 2 * n)));
        }
        let mut run = Self::from_model(model, record.options);
        for (i, (_, t)) in loaded.into_iter().enumerate() {
            let slot = if i < n { &mut run.adam.m[i] } else { &mut run.adam.v[i - n] };
            if t.shape() != slot.shape() {
                return Err(FuseError::Format(format!("optimizer tensor {i} has shape {}", t.shape())));
            }
            *slot = t;
        }
        run.adam.step = record.adam_step;
        run.step = record.step;
        run.loss_history = record.loss_history;
        Ok(run)
    }
}
