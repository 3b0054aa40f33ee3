//! Training losses and image-quality metrics.

mod perceptual;
mod pixel;
mod ssim;

use serde::{Deserialize, Serialize};

pub use perceptual::{perceptual_loss, FeatureExtractor, DEFAULT_EXTRACTOR_WIDTHS, DEFAULT_TAPS};
pub use pixel::{l1_loss, mse, psnr, tonemap, tonemap_signed, PSNR_CAP_DB};
pub use ssim::{gaussian_taps, ssim, ssim_loss, ssim_map, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};

use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_p: f64,
    pub lambda_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_p: 0.5,
            lambda_s: 0.05,
        }
    }
}

impl LossWeights {
    pub fn l1_only() -> Self {
        LossWeights {
            lambda_p: 0.0,
            lambda_s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_p >= 0.0 && self.lambda_s >= 0.0) {
            return Err(FuseError::Config(format!("loss weights must be non-negative, got {self:?}")));
        }
        Ok(())
    }
}

/// Loss terms. A term whose weight is zero is not evaluated and reads 0.
#[derive(Clone, Debug)]
pub struct LossBreakdown<T> {
    pub total: f64,
    pub color: f64,
    pub perceptual: f64,
    pub structural: f64,
    pub grad: Tensor<T>,
}

/// `L1 + λ_p·perceptual + λ_s·(1 - SSIM)` and its gradient with respect to `pred`.
pub fn total_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    weights: &LossWeights,
    fx: &FeatureExtractor<T>,
) -> Result<LossBreakdown<T>> {
    weights.validate()?;
    let (color, mut grad) = l1_loss(pred, target)?;
    let mut out = LossBreakdown {
        total: color,
        color,
        perceptual: 0.0,
        structural: 0.0,
        grad: Tensor::zeros([0, 0, 0, 0]),
    };
    if weights.lambda_p > 0.0 {
        let (p, g) = perceptual_loss(pred, target, fx)?;
        out.perceptual = p;
        out.total += weights.lambda_p * p;
        grad.add_assign(&g.scale(T::lit(weights.lambda_p)))?;
    }
    if weights.lambda_s > 0.0 {
        let (s, g) = ssim_loss(pred, target)?;
        out.structural = s;
        out.total += weights.lambda_s * s;
        grad.add_assign(&g.scale(T::lit(weights.lambda_s)))?;
    }
    out.grad = grad;
    Ok(out)
}
