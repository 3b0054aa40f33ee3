//! Lossy `r x r` spatial pooling, kept for the alignment ablation.

use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Shape, Tensor};

fn pool<T: Scalar>(op: &'static str, x: &Tensor<T>, r: usize, reduce: impl Fn(&[T]) -> T) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || s.height % r != 0 || s.width % r != 0 {
        return Err(FuseError::Alignment { op, shape: s, factor: r });
    }
    let (h, w) = (s.height / r, s.width / r);
    let mut out = Tensor::zeros(Shape::new(s.batch, s.channels, h, w));
    let mut block = Vec::with_capacity(r * r);
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = x.plane(b, c).to_vec();
            let dst = out.plane_mut(b, c);
            for y in 0..h {
                for xx in 0..w {
                    block.clear();
                    for dy in 0..r {
                        let row = (y * r + dy) * s.width + xx * r;
                        block.extend_from_slice(&src[row..row + r]);
                    }
                    dst[y * w + xx] = reduce(&block);
                }
            }
        }
    }
    Ok(out)
}

pub fn avg_pool<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let n = T::lit((r * r) as f64);
    pool("avg_pool", x, r, |b| b.iter().copied().sum::<T>() / n)
}

pub fn max_pool<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    pool("max_pool", x, r, |b| b.iter().copied().fold(T::neg_infinity(), T::max))
}

/// Spreads each pooled gradient evenly over its `r x r` block.
pub fn avg_pool_backward<T: Scalar>(grad_out: &Tensor<T>, r: usize) -> Tensor<T> {
    let s = grad_out.shape();
    let n = T::lit((r * r) as f64);
    Tensor::from_fn(Shape::new(s.batch, s.channels, s.height * r, s.width * r), |b, c, y, x| {
        grad_out.at(b, c, y / r, x / r) / n
    })
}

/// Routes each pooled gradient to the first maximal entry of its block.
pub fn max_pool_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    let expected = Shape::new(s.batch, s.channels, s.height / r.max(1), s.width / r.max(1));
    grad_out.expect_shape("max_pool_backward", expected)?;
    let mut out = Tensor::zeros(s);
    for b in 0..s.batch {
        for c in 0..s.channels {
            for y in 0..expected.height {
                for xx in 0..expected.width {
                    let mut best = (y * r, xx * r);
                    for dy in 0..r {
                        for dx in 0..r {
                            if x.at(b, c, y * r + dy, xx * r + dx) > x.at(b, c, best.0, best.1) {
                                best = (y * r + dy, xx * r + dx);
                            }
                        }
                    }
                    out.set(b, c, best.0, best.1, grad_out.at(b, c, y, xx));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_two_by_two() {
        let x = Tensor::<f32>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(avg_pool(&x, 2).unwrap().data(), &[3.0]);
        assert_eq!(max_pool(&x, 2).unwrap().data(), &[6.0]);
        let g = Tensor::from_vec([1, 1, 1, 1], vec![4.0f32]).unwrap();
        assert_eq!(avg_pool_backward(&g, 2).data(), &[1.0; 4]);
        assert_eq!(max_pool_backward(&x, &g, 2).unwrap().data(), &[0.0, 0.0, 0.0, 4.0]);
    }
}
