use crate::error::{FuseError, Result};
use crate::tensor::{Scalar, Tensor};

struct Tap<T> {
    i00: usize,
    i01: usize,
    i10: usize,
    i11: usize,
    fx: T,
    fy: T,
}

fn tap<T: Scalar>(h: usize, w: usize, y: usize, x: usize, dx: T, dy: T) -> Tap<T> {
    let max_x = T::lit((w - 1) as f64);
    let max_y = T::lit((h - 1) as f64);
    let sx = (T::lit(x as f64) + dx).max(T::zero()).min(max_x);
    let sy = (T::lit(y as f64) + dy).max(T::zero()).min(max_y);
    let x0 = sx.floor().to_usize().unwrap_or(0).min(w - 1);
    let y0 = sy.floor().to_usize().unwrap_or(0).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    Tap {
        i00: y0 * w + x0,
        i01: y0 * w + x1,
        i10: y1 * w + x0,
        i11: y1 * w + x1,
        fx: sx - T::lit(x0 as f64),
        fy: sy - T::lit(y0 as f64),
    }
}

fn check<T: Scalar>(x: &Tensor<T>, motion: &Tensor<T>) -> Result<()> {
    let (sx, sm) = (x.shape(), motion.shape());
    if sm.channels != 2 || (sm.batch, sm.height, sm.width) != (sx.batch, sx.height, sx.width) {
        return Err(FuseError::shape(
            "warp_bilinear",
            format!("motion ({}, 2, {}, {})", sx.batch, sx.height, sx.width),
            sm,
        ));
    }
    Ok(())
}

/// Resample `x` at `(px + dx, py + dy)` with bilinear filtering, clamping
/// sample positions to the image edge. `motion` holds `(dx, dy)` in pixels.
pub fn warp_bilinear<T: Scalar>(x: &Tensor<T>, motion: &Tensor<T>) -> Result<Tensor<T>> {
    check(x, motion)?;
    let s = x.shape();
    let (h, w) = (s.height, s.width);
    let mut out = Tensor::zeros(s);
    if s.numel() == 0 {
        return Ok(out);
    }
    for b in 0..s.batch {
        let mdx = motion.plane(b, 0);
        let mdy = motion.plane(b, 1);
        let taps: Vec<Tap<T>> = (0..h * w)
            .map(|i| tap(h, w, i / w, i % w, mdx[i], mdy[i]))
            .collect();
        for c in 0..s.channels {
            let src = x.plane(b, c).to_vec();
            for (o, t) in out.plane_mut(b, c).iter_mut().zip(&taps) {
                let top = src[t.i00] + (src[t.i01] - src[t.i00]) * t.fx;
                let bot = src[t.i10] + (src[t.i11] - src[t.i10]) * t.fx;
                *o = top + (bot - top) * t.fy;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`warp_bilinear`] with respect to `x` (motion held fixed).
pub fn warp_bilinear_backward<T: Scalar>(grad_out: &Tensor<T>, motion: &Tensor<T>) -> Result<Tensor<T>> {
    check(grad_out, motion)?;
    let s = grad_out.shape();
    let (h, w) = (s.height, s.width);
    let mut gx = Tensor::zeros(s);
    if s.numel() == 0 {
        return Ok(gx);
    }
    let one = T::one();
    for b in 0..s.batch {
        let mdx = motion.plane(b, 0);
        let mdy = motion.plane(b, 1);
        let taps: Vec<Tap<T>> = (0..h * w)
            .map(|i| tap(h, w, i / w, i % w, mdx[i], mdy[i]))
            .collect();
        for c in 0..s.channels {
            let g = grad_out.plane(b, c).to_vec();
            let dst = gx.plane_mut(b, c);
            for (gv, t) in g.into_iter().zip(&taps) {
                dst[t.i00] = dst[t.i00] + gv * (one - t.fx) * (one - t.fy);
                dst[t.i01] = dst[t.i01] + gv * t.fx * (one - t.fy);
                dst[t.i10] = dst[t.i10] + gv * (one - t.fx) * t.fy;
                dst[t.i11] = dst[t.i11] + gv * t.fx * t.fy;
            }
        }
    }
    Ok(gx)
}
