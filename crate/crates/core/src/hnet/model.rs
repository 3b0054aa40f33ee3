use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Alignment, HNetConfig};
use crate::error::{FuseError, Result, StageContext};
use crate::gradcheck::{Differentiable, Gradients};
use crate::ops::{
    avg_pool, avg_pool_backward, concat_channels, conv2d_backward_cached, conv2d_forward, max_pool,
    max_pool_backward, pixel_shuffle, pixel_unshuffle, pixel_unshuffle_backward, split_channels, Activation,
    ConvLayer, ConvVariant,
};
use crate::tensor::{Scalar, Shape, Tensor};

/// `x + conv2(relu(conv1(x)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock<T> {
    pub conv1: ConvLayer<T>,
    pub conv2: ConvLayer<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HNetModel<T = f32> {
    config: HNetConfig,
    pub encoder: Vec<ConvLayer<T>>,
    pub adapter: ConvLayer<T>,
    pub blocks: Vec<ResBlock<T>>,
    pub head: ConvLayer<T>,
}

/// Network inputs for one batch. History entries are previous frames'
/// `[L_D, G^LR]` stacks, already reprojected onto the current frame.
#[derive(Clone, Debug)]
pub struct HNetInput<T> {
    pub ld_lr: Tensor<T>,
    pub g_lr: Tensor<T>,
    pub g_hr: Option<Tensor<T>>,
    pub history: Vec<Tensor<T>>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub enc_in: Tensor<T>,
    pub enc_out: Vec<Tensor<T>>,
    pub g_hr: Option<Tensor<T>>,
    pub fusion_in: Tensor<T>,
    pub adapter_out: Tensor<T>,
    /// `(relu(conv1(x)), block output)` per residual block.
    pub blocks: Vec<(Tensor<T>, Tensor<T>)>,
    pub head_in: Tensor<T>,
    pub output: Tensor<T>,
}

impl<T> ForwardTrace<T> {
    pub fn skip(&self) -> &Tensor<T> {
        &self.enc_out[0]
    }

    pub fn encoded(&self) -> &Tensor<T> {
        self.enc_out.last().expect("non-empty encoder")
    }

    pub fn fused(&self) -> &Tensor<T> {
        self.blocks.last().map(|b| &b.1).unwrap_or(&self.adapter_out)
    }
}

#[derive(Clone, Debug)]
pub struct InputGrads<T> {
    pub ld_lr: Tensor<T>,
    pub g_lr: Tensor<T>,
    pub g_hr: Option<Tensor<T>>,
    pub history: Vec<Tensor<T>>,
}

/// Multiply-accumulates per stage for one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StageMacs {
    pub encoder: u64,
    pub fusion_adapter: u64,
    pub fusion_blocks: u64,
    pub head: u64,
}

impl StageMacs {
    pub fn fusion(&self) -> u64 {
        self.fusion_adapter + self.fusion_blocks
    }

    pub fn total(&self) -> u64 {
        self.encoder + self.fusion() + self.head
    }
}

impl<T: Scalar> HNetModel<T> {
    /// All-zero weights.
    pub fn zeros(config: HNetConfig) -> Result<Self> {
        config.validate()?;
        let mut encoder = Vec::with_capacity(config.encoder_channels.len());
        let mut c_in = config.encoder_in_channels();
        for &c in &config.encoder_channels {
            encoder.push(ConvLayer::new(c_in, c, ConvVariant::Standard, Activation::Relu));
            c_in = c;
        }
        let fv = config.fusion_variant();
        let fc = config.fusion_channels;
        let adapter = ConvLayer::new(config.fusion_in_channels(), fc, fv, Activation::Relu);
        let blocks = (0..config.fusion_blocks)
            .map(|_| ResBlock {
                conv1: ConvLayer::new(fc, fc, fv, Activation::Relu),
                conv2: ConvLayer::new(fc, fc, fv, Activation::None),
            })
            .collect();
        let head = ConvLayer::new(config.head_in_channels(), 3, ConvVariant::Standard, Activation::None);
        Ok(HNetModel {
            config,
            encoder,
            adapter,
            blocks,
            head,
        })
    }

    /// He-initialized weights from `seed`. Residual branches start small.
    pub fn new(config: HNetConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut m.encoder {
            l.init_he(&mut rng, 1.0);
        }
        m.adapter.init_he(&mut rng, 1.0);
        for b in &mut m.blocks {
            b.conv1.init_he(&mut rng, 1.0);
            b.conv2.init_he(&mut rng, 0.1);
        }
        m.head.init_he(&mut rng, 0.5f64.sqrt());
        Ok(m)
    }

    pub fn config(&self) -> &HNetConfig {
        &self.config
    }

    pub fn cast<U: Scalar>(&self) -> HNetModel<U> {
        let mut out = HNetModel::<U>::zeros(self.config.clone()).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.1.cast();
        }
        out
    }

    fn layers(&self) -> Vec<(String, &ConvLayer<T>)> {
        let mut v: Vec<(String, &ConvLayer<T>)> = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            v.push((format!("encoder.{i}"), l));
        }
        v.push(("fusion.adapter".into(), &self.adapter));
        for (i, b) in self.blocks.iter().enumerate() {
            v.push((format!("fusion.block{i}.conv1"), &b.conv1));
            v.push((format!("fusion.block{i}.conv2"), &b.conv2));
        }
        v.push(("head".into(), &self.head));
        v
    }

    /// Named parameters in a fixed order shared by gradients and serialization.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers()
            .into_iter()
            .flat_map(|(prefix, l)| l.params().into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t)))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for l in &mut self.encoder {
            v.extend(l.params_mut().into_iter().map(|p| p.1));
        }
        v.extend(self.adapter.params_mut().into_iter().map(|p| p.1));
        for b in &mut self.blocks {
            v.extend(b.conv1.params_mut().into_iter().map(|p| p.1));
            v.extend(b.conv2.params_mut().into_iter().map(|p| p.1));
        }
        v.extend(self.head.params_mut().into_iter().map(|p| p.1));
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.1.shape().numel()).sum()
    }

    /// MACs per stage for an HR output of `hr_h x hr_w`.
    pub fn stage_macs(&self, hr_h: usize, hr_w: usize) -> StageMacs {
        let r = self.config.r;
        let lr = ((hr_h / r) * (hr_w / r)) as u64;
        let hr = (hr_h * hr_w) as u64;
        StageMacs {
            encoder: lr * self.encoder.iter().map(|l| l.macs_per_pixel()).sum::<u64>(),
            fusion_adapter: lr * self.adapter.macs_per_pixel(),
            fusion_blocks: lr
                * self
                    .blocks
                    .iter()
                    .map(|b| b.conv1.macs_per_pixel() + b.conv2.macs_per_pixel())
                    .sum::<u64>(),
            head: hr * self.head.macs_per_pixel(),
        }
    }

    fn check_input(&self, input: &HNetInput<T>) -> Result<Shape> {
        let c = &self.config;
        let s = input.ld_lr.shape();
        if s.channels != 3 {
            return Err(FuseError::shape("hnet input", "3 radiance channels", s));
        }
        input.g_lr.expect_shape("hnet input", s.with_channels(c.g_lr_width()))?;
        let want_hist = if c.use_history { c.history_frames } else { 0 };
        if input.history.len() != want_hist {
            return Err(FuseError::Config(format!(
                "model expects {want_hist} history frames, got {}",
                input.history.len()
            )));
        }
        for h in &input.history {
            h.expect_shape("hnet history", s.with_channels(c.frame_channels()))?;
        }
        match (&input.g_hr, c.uses_hr()) {
            (Some(g), true) => {
                let gs = g.shape();
                if gs.height % c.r != 0 || gs.width % c.r != 0 || gs.height / c.r != s.height || gs.width / c.r != s.width
                {
                    return Err(FuseError::Alignment {
                        op: "hnet fusion",
                        shape: gs,
                        factor: c.r,
                    });
                }
                if gs.channels != c.g_hr_width() || gs.batch != s.batch {
                    return Err(FuseError::shape(
                        "hnet fusion",
                        Shape::new(s.batch, c.g_hr_width(), s.height * c.r, s.width * c.r),
                        gs,
                    ));
                }
            }
            (None, false) => {}
            (Some(_), false) => return Err(FuseError::Config("model has no HR branch but got HR G-buffer".into())),
            (None, true) => return Err(FuseError::Config("model requires an HR G-buffer".into())),
        }
        Ok(s)
    }

    fn align(&self, g_hr: &Tensor<T>) -> Result<Tensor<T>> {
        let r = self.config.r;
        match self.config.alignment {
            Alignment::Unshuffle => pixel_unshuffle(g_hr, r),
            Alignment::AvgPool => avg_pool(g_hr, r),
            Alignment::MaxPool => max_pool(g_hr, r),
        }
    }

    /// Returns `(F_s, F_i)` and every layer output.
    pub fn encoder_forward(&self, input: &HNetInput<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut parts = vec![&input.ld_lr, &input.g_lr];
        parts.extend(input.history.iter());
        let enc_in = concat_channels(&parts)?;
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let x = outs.last().unwrap_or(&enc_in);
            outs.push(conv2d_forward(x, layer)?);
        }
        Ok((enc_in, outs))
    }

    /// `F([F_i, P_D(G^HR)])`; returns the fusion input, adapter output and block activations.
    pub fn fusion_forward(
        &self,
        f_i: &Tensor<T>,
        g_hr: Option<&Tensor<T>>,
    ) -> Result<(Tensor<T>, Tensor<T>, Vec<(Tensor<T>, Tensor<T>)>)> {
        let fusion_in = match g_hr {
            Some(g) => {
                let aligned = self.align(g)?;
                if aligned.shape().spatial() != f_i.shape().spatial() {
                    return Err(FuseError::Alignment {
                        op: "fusion_forward",
                        shape: g.shape(),
                        factor: self.config.r,
                    });
                }
                concat_channels(&[f_i, &aligned])?
            }
            None => f_i.clone(),
        };
        let adapter_out = conv2d_forward(&fusion_in, &self.adapter)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let x = blocks.last().map(|p: &(Tensor<T>, Tensor<T>)| &p.1).unwrap_or(&adapter_out);
            let h1 = conv2d_forward(x, &b.conv1)?;
            let mut out = conv2d_forward(&h1, &b.conv2)?;
            out.add_assign(x)?;
            blocks.push((h1, out));
        }
        Ok((fusion_in, adapter_out, blocks))
    }

    /// `Conv(P_U([F_s, F_f]))`; returns the shuffled head input and the output.
    pub fn head_forward(&self, f_s: &Tensor<T>, f_f: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let cat = concat_channels(&[f_s, f_f])?;
        let head_in = pixel_shuffle(&cat, self.config.r)?;
        let out = conv2d_forward(&head_in, &self.head)?;
        Ok((head_in, out))
    }

    pub fn forward_trace(&self, input: &HNetInput<T>) -> Result<ForwardTrace<T>> {
        let lr = self.check_input(input)?;
        let (enc_in, enc_out) = self.encoder_forward(input).stage("encoder")?;
        let f_i = enc_out.last().expect("non-empty encoder");
        let (fusion_in, adapter_out, blocks) = self.fusion_forward(f_i, input.g_hr.as_ref()).stage("fusion")?;
        let f_f = blocks.last().map(|b| &b.1).unwrap_or(&adapter_out);
        debug_assert_eq!(f_f.shape().spatial(), lr.spatial());
        let (head_in, output) = self.head_forward(&enc_out[0], f_f).stage("head")?;
        Ok(ForwardTrace {
            enc_in,
            enc_out,
            g_hr: input.g_hr.clone(),
            fusion_in,
            adapter_out,
            blocks,
            head_in,
            output,
        })
    }

    /// Predicted HR demodulated radiance (or color when demodulation is off).
    pub fn forward(&self, input: &HNetInput<T>) -> Result<Tensor<T>> {
        Ok(self.forward_trace(input)?.output)
    }

    /// Parameter gradients in [`Self::params`] order, plus input gradients.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_out: &Tensor<T>) -> Result<(Vec<Tensor<T>>, InputGrads<T>)> {
        let c = &self.config;
        let r = c.r;
        let head_grads = conv2d_backward_cached(&trace.head_in, None, &self.head, grad_out)?;
        let g_cat = pixel_unshuffle(&head_grads.input, r)?;
        let mut parts = split_channels(&g_cat, &[c.skip_channels(), c.fusion_channels])?;
        let mut g_x = parts.pop().expect("two parts");
        let g_skip = parts.pop().expect("two parts");

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let x = if i == 0 { &trace.adapter_out } else { &trace.blocks[i - 1].1 };
            let h1 = &trace.blocks[i].0;
            let g2 = conv2d_backward_cached(h1, None, &b.conv2, &g_x)?;
            let g1 = conv2d_backward_cached(x, Some(h1), &b.conv1, &g2.input)?;
            g_x.add_assign(&g1.input)?;
            block_grads.push((g1, g2));
        }
        block_grads.reverse();

        let adapter = conv2d_backward_cached(&trace.fusion_in, Some(&trace.adapter_out), &self.adapter, &g_x)?;
        let c_i = c.encoder_out_channels();
        let (g_fi, g_hr) = if c.uses_hr() {
            let mut p = split_channels(&adapter.input, &[c_i, c.aligned_hr_channels()])?;
            let g_aligned = p.pop().expect("two parts");
            let hr = trace.g_hr.as_ref().expect("HR input present");
            let g = match c.alignment {
                Alignment::Unshuffle => pixel_unshuffle_backward(&g_aligned, r)?,
                Alignment::AvgPool => avg_pool_backward(&g_aligned, r),
                Alignment::MaxPool => max_pool_backward(hr, &g_aligned, r)?,
            };
            (p.pop().expect("two parts"), Some(g))
        } else {
            (adapter.input.clone(), None)
        };

        let n = self.encoder.len();
        let mut enc_grads = Vec::with_capacity(n);
        let mut g = g_fi;
        for k in (0..n).rev() {
            if k == 0 {
                g.add_assign(&g_skip)?;
            }
            let x = if k == 0 { &trace.enc_in } else { &trace.enc_out[k - 1] };
            let lg = conv2d_backward_cached(x, Some(&trace.enc_out[k]), &self.encoder[k], &g)?;
            g = lg.input.clone();
            enc_grads.push(lg);
        }
        enc_grads.reverse();

        let mut params = Vec::new();
        for lg in enc_grads {
            params.extend(lg.into_param_grads().1);
        }
        params.extend(adapter.into_param_grads().1);
        for (g1, g2) in block_grads {
            params.extend(g1.into_param_grads().1);
            params.extend(g2.into_param_grads().1);
        }
        params.extend(head_grads.weights);
        params.push(head_grads.bias);

        let fc = c.frame_channels();
        let mut sizes = vec![3, c.g_lr_width()];
        sizes.extend(std::iter::repeat(fc).take(trace.enc_in.shape().channels.saturating_sub(fc) / fc));
        let mut split = split_channels(&g, &sizes)?.into_iter();
        let ld_lr = split.next().expect("radiance part");
        let g_lr = split.next().expect("G-buffer part");
        Ok((
            params,
            InputGrads {
                ld_lr,
                g_lr,
                g_hr,
                history: split.collect(),
            },
        ))
    }
}

/// Inputs are `[ld_lr, g_lr, g_hr?, history...]`; `g_hr` is present iff the
/// config has an HR branch.
impl<T: Scalar> HNetModel<T> {
    pub fn input_from_slice(&self, inputs: &[Tensor<T>]) -> HNetInput<T> {
        let hr = self.config.uses_hr() as usize;
        HNetInput {
            ld_lr: inputs[0].clone(),
            g_lr: inputs[1].clone(),
            g_hr: if hr == 1 { Some(inputs[2].clone()) } else { None },
            history: inputs[2 + hr..].to_vec(),
        }
    }
}

impl<T: Scalar> Differentiable<T> for HNetModel<T> {
    fn param_names(&self) -> Vec<String> {
        HNetModel::params(self).into_iter().map(|p| p.0).collect()
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        HNetModel::params(self).into_iter().map(|p| p.1).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        HNetModel::params_mut(self)
    }

    fn forward(&self, inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
        HNetModel::forward(self, &self.input_from_slice(inputs))
    }

    fn backward(&self, inputs: &[Tensor<T>], grad_out: &Tensor<T>) -> Result<Gradients<T>> {
        let trace = self.forward_trace(&self.input_from_slice(inputs))?;
        let (params, g) = HNetModel::backward(self, &trace, grad_out)?;
        let mut gi = vec![Some(g.ld_lr), Some(g.g_lr)];
        if let Some(h) = g.g_hr {
            gi.push(Some(h));
        }
        gi.extend(g.history.into_iter().map(Some));
        Ok(Gradients { inputs: gi, params })
    }
}
