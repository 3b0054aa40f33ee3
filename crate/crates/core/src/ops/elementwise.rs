//! Channel concatenation and pixel-wise arithmetic.

use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Default divisor floor for demodulation.
pub const DEFAULT_DIV_EPS: f64 = 1e-4;

/// Concatenate along channels. Returns the tensor; channel offsets of the
/// parts are the running sums of their channel counts.
pub fn concat_channels<T: Scalar>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs
        .first()
        .ok_or_else(|| FuseError::shape("concat_channels", "at least one tensor", "none"))?
        .shape();
    let mut channels = 0;
    for t in xs {
        let s = t.shape();
        if (s.batch, s.height, s.width) != (first.batch, first.height, first.width) {
            return Err(FuseError::shape(
                "concat_channels",
                format!("batch {} and {}x{}", first.batch, first.height, first.width),
                s,
            ));
        }
        channels += s.channels;
    }
    let shape = first.with_channels(channels);
    let mut data = Vec::with_capacity(shape.numel());
    for b in 0..first.batch {
        for t in xs {
            data.extend_from_slice(t.item(b));
        }
    }
    Tensor::from_vec(shape, data)
}

/// Channels `start..start+len` of every batch item.
pub fn slice_channels<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if start + len > s.channels {
        return Err(FuseError::shape(
            "slice_channels",
            format!("range within {} channels", s.channels),
            format!("{start}..{}", start + len),
        ));
    }
    let p = s.plane();
    let mut data = Vec::with_capacity(s.batch * len * p);
    for b in 0..s.batch {
        data.extend_from_slice(&x.item(b)[start * p..(start + len) * p]);
    }
    Tensor::from_vec(s.with_channels(len), data)
}

/// Split a concatenation gradient back into per-part gradients.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let total: usize = sizes.iter().sum();
    if total != x.shape().channels {
        return Err(FuseError::shape(
            "split_channels",
            format!("{total} channels"),
            x.shape(),
        ));
    }
    let mut start = 0;
    sizes
        .iter()
        .map(|&n| {
            let part = slice_channels(x, start, n);
            start += n;
            part
        })
        .collect()
}

fn broadcast_check<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<bool> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa == sb {
        return Ok(false);
    }
    if sb.channels == 1 && sb == (Shape { channels: 1, ..sa }) {
        return Ok(true);
    }
    Err(FuseError::shape(op, sa, sb))
}

fn zip_broadcast<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if !broadcast_check(op, a, b)? {
        return a.zip_map(b, op, f);
    }
    let s = a.shape();
    let mut out = Tensor::zeros(s);
    for bi in 0..s.batch {
        let bp = b.plane(bi, 0);
        for c in 0..s.channels {
            let ap = a.plane(bi, c);
            for ((o, &av), &bv) in out.plane_mut(bi, c).iter_mut().zip(ap).zip(bp) {
                *o = f(av, bv);
            }
        }
    }
    Ok(out)
}

/// `a ⊙ b`; `b` may have one channel, broadcast over `a`'s channels.
pub fn elementwise_mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_broadcast("elementwise_mul", a, b, |x, y| x * y)
}

/// `a / max(b, eps)`; `b` may have one channel.
pub fn elementwise_div<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    zip_broadcast("elementwise_div", a, b, |x, y| x / y.max(eps))
}

/// Gradients of `a ⊙ b`. A broadcast `b` receives its gradient summed over channels.
pub fn elementwise_mul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    grad_out.expect_shape("elementwise_mul_backward", a.shape())?;
    let ga = zip_broadcast("elementwise_mul_backward", grad_out, b, |g, y| g * y)?;
    let gb_full = grad_out.zip_map(a, "elementwise_mul_backward", |g, x| g * x)?;
    let gb = if b.shape() == a.shape() {
        gb_full
    } else {
        sum_channels(&gb_full)
    };
    Ok((ga, gb))
}

/// Gradient of `a / max(b, eps)` with respect to `a`.
pub fn elementwise_div_backward_a<T: Scalar>(b: &Tensor<T>, grad_out: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    zip_broadcast("elementwise_div_backward", grad_out, b, |g, y| g / y.max(eps))
}

/// Sum over channels into a single-channel tensor.
pub fn sum_channels<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let mut out = Tensor::zeros(s.with_channels(1));
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = x.plane(b, c).to_vec();
            for (o, v) in out.plane_mut(b, 0).iter_mut().zip(src) {
                *o = *o + v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: [usize; 4], offset: f64) -> Tensor<f64> {
        let mut i = 0.0;
        Tensor::from_fn(shape, |_, _, _, _| {
            i += 1.0;
            offset + i * 0.37
        })
    }

    #[test]
    fn concat_shapes_and_inverse_slice() {
        let a = ramp([2, 2, 4, 4], 0.0);
        let b = ramp([2, 3, 4, 4], 100.0);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), Shape::new(2, 5, 4, 4));
        assert_eq!(slice_channels(&c, 0, 2).unwrap(), a);
        assert_eq!(slice_channels(&c, 2, 3).unwrap(), b);
        let parts = split_channels(&c, &[2, 3]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn concat_single_is_identity() {
        let a = ramp([1, 3, 2, 2], 1.0);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn concat_spatial_mismatch() {
        let a = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let b = Tensor::<f32>::zeros([1, 2, 4, 5]);
        assert!(matches!(concat_channels(&[&a, &b]), Err(FuseError::Shape { .. })));
    }

    #[test]
    fn mul_by_ones_and_div_round_trip() {
        let a = ramp([1, 3, 3, 3], -2.0);
        assert_eq!(elementwise_mul(&a, &Tensor::ones(a.shape())).unwrap(), a);
        let b = ramp([1, 3, 3, 3], 0.5);
        let q = elementwise_div(&a, &b, 1e-4).unwrap();
        let back = elementwise_mul(&q, &b).unwrap();
        for (x, y) in back.data().iter().zip(a.data()) {
            assert!((x - y).abs() <= 1e-6 * y.abs().max(1e-12));
        }
    }

    #[test]
    fn div_clamps_small_divisors() {
        let a = Tensor::<f64>::full([1, 1, 1, 2], 1.0);
        let b = Tensor::from_vec([1, 1, 1, 2], vec![0.0, 1e-9]).unwrap();
        let q = elementwise_div(&a, &b, 1e-4).unwrap();
        assert_eq!(q.data(), &[1e4, 1e4]);
    }

    #[test]
    fn broadcast_single_channel() {
        let a = ramp([1, 3, 2, 2], 0.0);
        let b = Tensor::<f64>::full([1, 1, 2, 2], 2.0);
        let m = elementwise_mul(&a, &b).unwrap();
        assert_eq!(m, a.scale(2.0));
        let bad = Tensor::<f64>::full([1, 2, 2, 2], 2.0);
        assert!(elementwise_mul(&a, &bad).is_err());
    }
}
