use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FuseError, Result};
use crate::ops::{conv2d_backward_cached, conv2d_forward, Activation, ConvLayer, ConvVariant};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_EXTRACTOR_WIDTHS: [usize; 5] = [8, 8, 8, 8, 8];
/// Zero-based layer indices whose outputs are compared.
pub const DEFAULT_TAPS: [usize; 2] = [1, 3];

/// Frozen convolution stack standing in for a pretrained image classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor<T = f32> {
    layers: Vec<ConvLayer<T>>,
    taps: Vec<usize>,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn seeded(seed: u64) -> Self {
        Self::new(seed, &DEFAULT_EXTRACTOR_WIDTHS, &DEFAULT_TAPS, Activation::Relu).expect("default taps are valid")
    }

    pub fn new(seed: u64, widths: &[usize], taps: &[usize], activation: Activation) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = 3;
        let layers = widths
            .iter()
            .map(|&c| {
                let mut l = ConvLayer::new(c_in, c, ConvVariant::Standard, activation);
                l.init_he(&mut rng, 1.0);
                c_in = c;
                l
            })
            .collect();
        Self::from_layers(layers, taps.to_vec())
    }

    /// Wrap externally supplied weights, e.g. converted classifier layers.
    pub fn from_layers(layers: Vec<ConvLayer<T>>, mut taps: Vec<usize>) -> Result<Self> {
        taps.sort_unstable();
        taps.dedup();
        if taps.is_empty() || *taps.last().expect("non-empty") >= layers.len() {
            return Err(FuseError::Config(format!(
                "feature taps {taps:?} out of range for {} layers",
                layers.len()
            )));
        }
        if layers.first().map(|l| l.in_channels) != Some(3) {
            return Err(FuseError::Config("feature extractor must take 3-channel images".into()));
        }
        Ok(FeatureExtractor { layers, taps })
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    /// Outputs of every layer up to the deepest tap.
    pub fn features(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let depth = self.taps.last().expect("validated taps") + 1;
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(depth);
        for l in &self.layers[..depth] {
            let next = conv2d_forward(outs.last().unwrap_or(x), l)?;
            outs.push(next);
        }
        Ok(outs)
    }
}

/// Sum over taps of the mean squared feature difference, with its gradient
/// with respect to `pred`.
pub fn perceptual_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    fx: &FeatureExtractor<T>,
) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(FuseError::shape("perceptual_loss", pred.shape(), target.shape()));
    }
    let fp = fx.features(pred)?;
    let ft = fx.features(target)?;
    let mut loss = 0.0;
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; fp.len()];
    for &k in &fx.taps {
        let n = fp[k].data().len().max(1) as f64;
        let mut sq = 0.0;
        for (a, b) in fp[k].data().iter().zip(ft[k].data()) {
            let d = a.as_f64() - b.as_f64();
            sq += d * d;
        }
        loss += sq / n;
        let two_over_n = T::lit(2.0 / n);
        grads[k] = Some(fp[k].zip_map(&ft[k], "perceptual_loss", |a, b| two_over_n * (a - b))?);
    }
    let mut g: Option<Tensor<T>> = None;
    for k in (0..fp.len()).rev() {
        let mut acc = match (g.take(), grads[k].take()) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b)?;
                a
            }
            (a, b) => a.or(b).expect("deepest layer is a tap"),
        };
        let x = if k == 0 { pred } else { &fp[k - 1] };
        acc = conv2d_backward_cached(x, Some(&fp[k]), &fx.layers[k], &acc)?.input;
        g = Some(acc);
    }
    Ok((loss, g.expect("at least one layer")))
}
