//! Turns rendered frame bundles into network inputs and training targets.

use crate::brdf::{build_fbeta_map, demodulate, remodulate, EnvBrdfLut, ShadingGBuffer};
use crate::dataset::FrameBundle;
use crate::error::{FuseError, Result};
use crate::hnet::{GChannel, HNetConfig, HNetInput, HNetModel};
use crate::ops::{concat_channels, warp_bilinear, DEFAULT_DIV_EPS};
use crate::tensor::Tensor;

/// Everything needed to run and supervise the model on one frame (or a batch
/// of equally sized crops).
#[derive(Clone, Debug)]
pub struct FrameFeatures {
    pub input: HNetInput<f32>,
    /// HR F_β used to remodulate the prediction; `None` when the config does
    /// not demodulate.
    pub fbeta_hr: Option<Tensor<f32>>,
    pub emissive_hr: Tensor<f32>,
    /// HR reference color.
    pub target: Tensor<f32>,
}

/// Stack the channels named by `schema`. Depth is stored as `1 / (1 + d)`.
pub fn gbuffer_tensor(g: &ShadingGBuffer, schema: &[GChannel], fbeta: &Tensor<f32>) -> Result<Tensor<f32>> {
    let depth = g.depth.map(|d| 1.0 / (1.0 + d));
    let parts: Vec<&Tensor<f32>> = schema
        .iter()
        .map(|c| match c {
            GChannel::Fbeta => fbeta,
            GChannel::Albedo => &g.albedo,
            GChannel::Roughness => &g.roughness,
            GChannel::Ndotv => &g.ndotv,
            GChannel::Normal => &g.normal,
            GChannel::Emissive => &g.emissive,
            GChannel::Depth => &depth,
        })
        .collect();
    concat_channels(&parts)
}

/// Radiance the network sees: demodulated or raw color.
fn radiance(frame: &FrameBundle, fbeta: &Tensor<f32>, config: &HNetConfig) -> Result<Tensor<f32>> {
    if config.demodulate {
        let lit = frame.color.sub(&frame.gbuffer.emissive)?;
        demodulate(&lit, fbeta, DEFAULT_DIV_EPS as f32)
    } else {
        Ok(frame.color.clone())
    }
}

/// `[L_D, G^LR]` of one LR frame.
fn lr_stack(frame: &FrameBundle, config: &HNetConfig, lut: &EnvBrdfLut) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let fbeta = build_fbeta_map(&frame.gbuffer, lut, config.fbeta_mode)?;
    let ld = radiance(frame, &fbeta, config)?;
    let g = gbuffer_tensor(&frame.gbuffer, &config.g_lr_channels, &fbeta)?;
    Ok((ld, g))
}

/// Features of frame `t` of a sequence of `(HR, LR)` pairs.
///
/// History frames are warped into frame `t` by chaining each frame's motion
/// vectors. Frames before the start of the sequence repeat frame 0.
pub fn prepare_frame(
    frames: &[(FrameBundle, FrameBundle)],
    t: usize,
    config: &HNetConfig,
    lut: &EnvBrdfLut,
) -> Result<FrameFeatures> {
    let (hr, lr) = frames
        .get(t)
        .ok_or_else(|| FuseError::Config(format!("frame {t} out of range (sequence has {})", frames.len())))?;
    let s_lr = lr.color.shape();
    let s_hr = hr.color.shape();
    if s_hr.height != s_lr.height * config.r || s_hr.width != s_lr.width * config.r {
        return Err(FuseError::Alignment {
            op: "prepare_frame",
            shape: s_hr,
            factor: config.r,
        });
    }
    let (ld_lr, g_lr) = lr_stack(lr, config, lut)?;

    let mut history = Vec::new();
    if config.use_history {
        for k in 1..=config.history_frames {
            let src = t.saturating_sub(k);
            let (ld, g) = lr_stack(&frames[src].1, config, lut)?;
            let mut stack = concat_channels(&[&ld, &g])?;
            // Walk forward from `src` to `t`, reprojecting one frame at a time.
            for j in src + 1..=t {
                stack = warp_bilinear(&stack, &frames[j].1.gbuffer.motion)?;
            }
            history.push(stack);
        }
    }

    let fbeta_hr_full = build_fbeta_map(&hr.gbuffer, lut, config.fbeta_mode)?;
    let g_hr = if config.uses_hr() {
        Some(gbuffer_tensor(&hr.gbuffer, &config.g_hr_channels, &fbeta_hr_full)?)
    } else {
        None
    };
    Ok(FrameFeatures {
        input: HNetInput {
            ld_lr,
            g_lr,
            g_hr,
            history,
        },
        fbeta_hr: config.demodulate.then_some(fbeta_hr_full),
        emissive_hr: hr.gbuffer.emissive.clone(),
        target: hr.color.clone(),
    })
}

impl FrameFeatures {
    /// Crop an LR window `(y, x, h, w)` and the aligned HR window.
    pub fn crop(&self, r: usize, y: usize, x: usize, h: usize, w: usize) -> Result<Self> {
        let hr = |t: &Tensor<f32>| t.crop(y * r, x * r, h * r, w * r);
        let lr = |t: &Tensor<f32>| t.crop(y, x, h, w);
        Ok(FrameFeatures {
            input: HNetInput {
                ld_lr: lr(&self.input.ld_lr)?,
                g_lr: lr(&self.input.g_lr)?,
                g_hr: self.input.g_hr.as_ref().map(hr).transpose()?,
                history: self.input.history.iter().map(lr).collect::<Result<_>>()?,
            },
            fbeta_hr: self.fbeta_hr.as_ref().map(hr).transpose()?,
            emissive_hr: hr(&self.emissive_hr)?,
            target: hr(&self.target)?,
        })
    }

    /// Concatenate along the batch dimension.
    pub fn stack(items: &[FrameFeatures]) -> Result<Self> {
        let cat = |f: &dyn Fn(&FrameFeatures) -> &Tensor<f32>| {
            Tensor::stack(&items.iter().map(f).collect::<Vec<_>>())
        };
        let first = items
            .first()
            .ok_or_else(|| FuseError::Config("cannot stack an empty batch".into()))?;
        let g_hr = match first.input.g_hr {
            Some(_) => Some(cat(&|i| i.input.g_hr.as_ref().expect("uniform batch"))?),
            None => None,
        };
        let fbeta_hr = match first.fbeta_hr {
            Some(_) => Some(cat(&|i| i.fbeta_hr.as_ref().expect("uniform batch"))?),
            None => None,
        };
        let history = (0..first.input.history.len())
            .map(|k| cat(&|i| &i.input.history[k]))
            .collect::<Result<_>>()?;
        Ok(FrameFeatures {
            input: HNetInput {
                ld_lr: cat(&|i| &i.input.ld_lr)?,
                g_lr: cat(&|i| &i.input.g_lr)?,
                g_hr,
                history,
            },
            fbeta_hr,
            emissive_hr: cat(&|i| &i.emissive_hr)?,
            target: cat(&|i| &i.target)?,
        })
    }

    /// HR color from a network output.
    pub fn compose(&self, output: &Tensor<f32>) -> Result<Tensor<f32>> {
        match &self.fbeta_hr {
            Some(fb) => remodulate(output, fb, &self.emissive_hr),
            None => Ok(output.clone()),
        }
    }
}

/// Run the model on prepared features and return HR color.
pub fn super_resolve(model: &HNetModel<f32>, features: &FrameFeatures) -> Result<Tensor<f32>> {
    let out = model.forward(&features.input)?;
    features.compose(&out)
}
