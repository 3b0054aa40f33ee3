//! Pixel unshuffle / shuffle: lossless rearrangement between `r x r` spatial
//! blocks and channel groups.
//!
//! Channel ordering is `(c, dy, dx)`: input channel `c` at block offset
//! `(dy, dx)` lands in output channel `c * r * r + dy * r + dx`. The two
//! operations are exact mutual inverses, and each is the adjoint of the other,
//! so their backward passes are the opposite operation.

use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Shape, Tensor};

pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || s.height % r != 0 || s.width % r != 0 {
        return Err(FuseError::Alignment {
            op: "pixel_unshuffle",
            shape: s,
            factor: r,
        });
    }
    let (h, w) = (s.height / r, s.width / r);
    let out_shape = Shape::new(s.batch, s.channels * r * r, h, w);
    let mut data = Vec::with_capacity(s.numel());
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = x.plane(b, c);
            for dy in 0..r {
                for dx in 0..r {
                    for y in 0..h {
                        let row = (y * r + dy) * s.width;
                        data.extend((0..w).map(|xx| src[row + xx * r + dx]));
                    }
                }
            }
        }
    }
    Tensor::from_vec(out_shape, data)
}

pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || s.channels % (r * r) != 0 {
        return Err(FuseError::Alignment {
            op: "pixel_shuffle",
            shape: s,
            factor: r,
        });
    }
    let c_out = s.channels / (r * r);
    let (h, w) = (s.height * r, s.width * r);
    let mut out = Tensor::zeros(Shape::new(s.batch, c_out, h, w));
    for b in 0..s.batch {
        for c in 0..c_out {
            for dy in 0..r {
                for dx in 0..r {
                    let src = x.plane(b, c * r * r + dy * r + dx);
                    let dst = out.plane_mut(b, c);
                    for y in 0..s.height {
                        let row = (y * r + dy) * w;
                        for xx in 0..s.width {
                            dst[row + xx * r + dx] = src[y * s.width + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of [`pixel_unshuffle`] with respect to its input.
pub fn pixel_unshuffle_backward<T: Scalar>(grad_out: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    pixel_shuffle(grad_out, r)
}

/// Gradient of [`pixel_shuffle`] with respect to its input.
pub fn pixel_shuffle_backward<T: Scalar>(grad_out: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    pixel_unshuffle(grad_out, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unshuffle_shape() {
        let x = Tensor::<f32>::zeros([1, 3, 8, 8]);
        assert_eq!(pixel_unshuffle(&x, 4).unwrap().shape(), Shape::new(1, 48, 2, 2));
    }

    #[test]
    fn shuffle_shape() {
        let x = Tensor::<f32>::zeros([1, 48, 2, 2]);
        assert_eq!(pixel_shuffle(&x, 4).unwrap().shape(), Shape::new(1, 3, 8, 8));
    }

    #[test]
    fn factor_one_is_identity() {
        let x = Tensor::<f32>::from_fn([2, 3, 4, 5], |b, c, y, x| (b * 1000 + c * 100 + y * 10 + x) as f32);
        assert_eq!(pixel_unshuffle(&x, 1).unwrap(), x);
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
    }

    #[test]
    fn block_ordering_contract() {
        let x = Tensor::<f32>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let u = pixel_unshuffle(&x, 2).unwrap();
        assert_eq!(u.shape(), Shape::new(1, 4, 1, 1));
        assert_eq!(u.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pixel_shuffle(&u, 2).unwrap(), x);
    }

    #[test]
    fn non_divisible_inputs_are_alignment_errors() {
        let x = Tensor::<f32>::zeros([1, 3, 6, 8]);
        assert!(matches!(pixel_unshuffle(&x, 4), Err(FuseError::Alignment { .. })));
        let y = Tensor::<f32>::zeros([1, 12, 2, 2]);
        assert!(matches!(pixel_shuffle(&y, 4), Err(FuseError::Alignment { .. })));
    }
}
