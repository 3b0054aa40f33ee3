use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Tensor};

pub const PSNR_CAP_DB: f64 = 99.0;

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(FuseError::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean absolute error and its gradient with respect to `pred`.
///
/// The subgradient at `pred == target` is zero.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape("l1_loss", pred, target)?;
    let n = pred.data().len().max(1) as f64;
    let mut sum = 0.0;
    let inv = T::lit(1.0 / n);
    let grad = pred.zip_map(target, "l1_loss", |p, t| {
        let d = p - t;
        if d > T::zero() {
            inv
        } else if d < T::zero() {
            -inv
        } else {
            T::zero()
        }
    })?;
    for (p, t) in pred.data().iter().zip(target.data()) {
        sum += (p.as_f64() - t.as_f64()).abs();
    }
    Ok((sum / n, grad))
}

pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    same_shape("mse", pred, target)?;
    let n = pred.data().len().max(1) as f64;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    Ok(s / n)
}

/// PSNR for unit peak. Returns `cap` when the images are identical.
pub fn psnr<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, cap: f64) -> Result<f64> {
    let m = mse(pred, target)?;
    if m == 0.0 {
        return Ok(cap);
    }
    Ok((10.0 * (1.0 / m).log10()).min(cap))
}

/// Display mapping used before metrics: `x / (1 + x)`, clamped to `[0, 1]`.
pub fn tonemap<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        let v = v.max(T::zero());
        (v / (T::one() + v)).min(T::one())
    })
}

/// Odd extension `x / (1 + |x|)` used inside the training loss so gradients
/// exist for negative predictions. Returns the mapped tensor and `dy/dx`.
pub fn tonemap_signed<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let y = x.map(|v| v / (T::one() + v.abs()));
    let d = x.map(|v| {
        let s = T::one() + v.abs();
        T::one() / (s * s)
    });
    (y, d)
}
