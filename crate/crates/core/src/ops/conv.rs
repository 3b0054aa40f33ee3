//! 3x3, stride-1, zero-padded convolution in standard and depthwise-separable
//! form, with analytic backward passes.
//!
//! Standard convolution runs as row-blocked im2col + GEMM. Tiles have a fixed
//! pixel budget that does not depend on the thread count, and weight gradients
//! are reduced per batch item in index order, so results are bitwise
//! reproducible however the work is scheduled.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FuseError, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

const TILE_PIXELS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvVariant {
    Standard,
    DepthwiseSeparable,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConvKernel<T> {
    /// `(out, in, 3, 3)` weights.
    Standard { weight: Tensor<T> },
    /// Per-channel `(in, 1, 3, 3)` filter followed by a `(out, in, 1, 1)` mix.
    DepthwiseSeparable {
        depthwise: Tensor<T>,
        pointwise: Tensor<T>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    pub kernel: ConvKernel<T>,
    /// `(1, out, 1, 1)`.
    pub bias: Tensor<T>,
}

/// Gradients of one convolution. `weights` follows the order of
/// [`ConvLayer::params`] minus the trailing bias.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<Tensor<T>>,
    pub bias: Tensor<T>,
}

impl<T> ConvGrads<T> {
    /// Parameter gradients in [`ConvLayer::params`] order.
    pub fn into_param_grads(self) -> (Tensor<T>, Vec<Tensor<T>>) {
        let mut params = self.weights;
        params.push(self.bias);
        (self.input, params)
    }
}

impl<T: Scalar> ConvLayer<T> {
    /// Zero-initialized layer.
    pub fn new(in_channels: usize, out_channels: usize, variant: ConvVariant, activation: Activation) -> Self {
        let kernel = match variant {
            ConvVariant::Standard => ConvKernel::Standard {
                weight: Tensor::zeros([out_channels, in_channels, 3, 3]),
            },
            ConvVariant::DepthwiseSeparable => ConvKernel::DepthwiseSeparable {
                depthwise: Tensor::zeros([in_channels, 1, 3, 3]),
                pointwise: Tensor::zeros([out_channels, in_channels, 1, 1]),
            },
        };
        ConvLayer {
            in_channels,
            out_channels,
            activation,
            kernel,
            bias: Tensor::zeros([1, out_channels, 1, 1]),
        }
    }

    /// Center-tap identity: output channel `c` copies input channel `c`.
    pub fn identity(channels: usize) -> Self {
        let mut layer = Self::new(channels, channels, ConvVariant::Standard, Activation::None);
        if let ConvKernel::Standard { weight } = &mut layer.kernel {
            for c in 0..channels {
                weight.set(c, c, 1, 1, T::one());
            }
        }
        layer
    }

    /// He-normal weights, zero bias. `gain` scales the standard deviation.
    pub fn init_he<R: Rng>(&mut self, rng: &mut R, gain: f64) {
        fn fill<T: Scalar, R: Rng>(t: &mut Tensor<T>, fan_in: usize, gain: f64, rng: &mut R) {
            let std = gain * (2.0 / fan_in.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in t.data_mut() {
                *v = T::lit(normal.sample(rng));
            }
        }
        match &mut self.kernel {
            ConvKernel::Standard { weight } => fill(weight, self.in_channels * 9, gain, rng),
            ConvKernel::DepthwiseSeparable {
                depthwise,
                pointwise,
            } => {
                // The depthwise stage is a per-channel filter; keep it unit-gain.
                fill(depthwise, 9, 1.0 / 2f64.sqrt(), rng);
                fill(pointwise, self.in_channels, gain, rng);
            }
        }
        self.bias.data_mut().iter_mut().for_each(|b| *b = T::zero());
    }

    pub fn variant(&self) -> ConvVariant {
        match self.kernel {
            ConvKernel::Standard { .. } => ConvVariant::Standard,
            ConvKernel::DepthwiseSeparable { .. } => ConvVariant::DepthwiseSeparable,
        }
    }

    /// Named parameter tensors, bias last.
    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match &self.kernel {
            ConvKernel::Standard { weight } => vec![("weight", weight), ("bias", &self.bias)],
            ConvKernel::DepthwiseSeparable {
                depthwise,
                pointwise,
            } => vec![
                ("depthwise", depthwise),
                ("pointwise", pointwise),
                ("bias", &self.bias),
            ],
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match &mut self.kernel {
            ConvKernel::Standard { weight } => vec![("weight", weight), ("bias", &mut self.bias)],
            ConvKernel::DepthwiseSeparable {
                depthwise,
                pointwise,
            } => vec![
                ("depthwise", depthwise),
                ("pointwise", pointwise),
                ("bias", &mut self.bias),
            ],
        }
    }

    /// Weight count excluding bias.
    pub fn weight_count(&self) -> usize {
        match &self.kernel {
            ConvKernel::Standard { weight } => weight.shape().numel(),
            ConvKernel::DepthwiseSeparable {
                depthwise,
                pointwise,
            } => depthwise.shape().numel() + pointwise.shape().numel(),
        }
    }

    /// Multiply-accumulates per output pixel.
    pub fn macs_per_pixel(&self) -> u64 {
        let (i, o) = (self.in_channels as u64, self.out_channels as u64);
        match self.kernel {
            ConvKernel::Standard { .. } => o * i * 9,
            ConvKernel::DepthwiseSeparable { .. } => i * 9 + i * o,
        }
    }

    fn check_input(&self, op: &'static str, x: &Tensor<T>) -> Result<()> {
        if x.shape().channels != self.in_channels {
            return Err(FuseError::shape(
                op,
                format!("{} input channels", self.in_channels),
                format!("{} channels in {}", x.shape().channels, x.shape()),
            ));
        }
        Ok(())
    }
}

/// Forward convolution, activation included.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    layer.check_input("conv2d_forward", x)?;
    let s = x.shape();
    let out_shape = s.with_channels(layer.out_channels);
    let mut out = match &layer.kernel {
        ConvKernel::Standard { weight } => conv3x3(x, weight.data(), layer.out_channels),
        ConvKernel::DepthwiseSeparable {
            depthwise,
            pointwise,
        } => {
            let mid = depthwise_forward(x, depthwise.data());
            pointwise_forward(&mid, pointwise.data(), layer.out_channels)
        }
    };
    debug_assert_eq!(out.shape(), out_shape);
    let bias = layer.bias.data();
    let plane = s.plane();
    let relu = layer.activation == Activation::Relu;
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(i, p)| {
            let b = bias[i % layer.out_channels];
            for v in p {
                let z = *v + b;
                *v = if relu && z <= T::zero() { T::zero() } else { z };
            }
        });
    Ok(out)
}

/// Backward pass that recomputes the forward output for the activation mask.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let out = if layer.activation == Activation::Relu {
        Some(conv2d_forward(x, layer)?)
    } else {
        None
    };
    conv2d_backward_cached(x, out.as_ref(), layer, grad_out)
}

/// Backward pass given the forward output (needed only for ReLU layers).
///
/// The ReLU derivative at exactly zero is taken as zero.
pub fn conv2d_backward_cached<T: Scalar>(
    x: &Tensor<T>,
    out: Option<&Tensor<T>>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    layer.check_input("conv2d_backward", x)?;
    let out_shape = x.shape().with_channels(layer.out_channels);
    grad_out.expect_shape("conv2d_backward", out_shape)?;

    let grad_pre = match (layer.activation, out) {
        (Activation::None, _) => grad_out.clone(),
        (Activation::Relu, Some(out)) => {
            out.expect_shape("conv2d_backward", out_shape)?;
            grad_out.zip_map(out, "conv2d_backward", |g, o| if o > T::zero() { g } else { T::zero() })?
        }
        (Activation::Relu, None) => {
            let out = conv2d_forward(x, layer)?;
            grad_out.zip_map(&out, "conv2d_backward", |g, o| if o > T::zero() { g } else { T::zero() })?
        }
    };

    let mut bias = vec![T::zero(); layer.out_channels];
    for b in 0..out_shape.batch {
        for (o, acc) in bias.iter_mut().enumerate() {
            *acc = *acc + grad_pre.plane(b, o).iter().copied().sum::<T>();
        }
    }
    let bias = Tensor::from_vec([1, layer.out_channels, 1, 1], bias)?;

    match &layer.kernel {
        ConvKernel::Standard { weight } => {
            let (input, gw) = conv3x3_backward(x, weight, &grad_pre);
            Ok(ConvGrads {
                input,
                weights: vec![gw],
                bias,
            })
        }
        ConvKernel::DepthwiseSeparable {
            depthwise,
            pointwise,
        } => {
            let mid = depthwise_forward(x, depthwise.data());
            let (grad_mid, gp) = pointwise_backward(&mid, pointwise, &grad_pre);
            let (input, gd) = depthwise_backward(x, depthwise, &grad_mid);
            Ok(ConvGrads {
                input,
                weights: vec![gd, gp],
                bias,
            })
        }
    }
}

fn tiles(height: usize, width: usize) -> impl Iterator<Item = (usize, usize)> {
    let rows = (TILE_PIXELS / width.max(1)).max(1);
    (0..height)
        .step_by(rows)
        .map(move |y0| (y0, rows.min(height - y0)))
}

/// Unfold rows `y0..y0+rows` of a `(cin, h, w)` item into a `(cin*9, rows*w)` matrix.
fn im2col<T: Scalar>(item: &[T], cin: usize, h: usize, w: usize, y0: usize, rows: usize, col: &mut [T]) {
    let p = rows * w;
    let hw = h * w;
    for ci in 0..cin {
        let src = &item[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let r = ci * 9 + ky * 3 + kx;
                let dst_row = &mut col[r * p..(r + 1) * p];
                for yy in 0..rows {
                    let dst = &mut dst_row[yy * w..(yy + 1) * w];
                    let sy = (y0 + yy + ky) as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let s = &src[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&s[..w - 1]);
                        }
                        1 => dst.copy_from_slice(s),
                        _ => {
                            dst[..w - 1].copy_from_slice(&s[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate a column matrix back into an item.
fn col2im<T: Scalar>(col: &[T], cin: usize, h: usize, w: usize, y0: usize, rows: usize, item: &mut [T]) {
    let p = rows * w;
    let hw = h * w;
    for ci in 0..cin {
        let dst_plane = &mut item[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let r = ci * 9 + ky * 3 + kx;
                let src_row = &col[r * p..(r + 1) * p];
                for yy in 0..rows {
                    let sy = (y0 + yy + ky) as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s = &src_row[yy * w..(yy + 1) * w];
                    let d = &mut dst_plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for (dv, &sv) in d[..w - 1].iter_mut().zip(&s[1..]) {
                                *dv = *dv + sv;
                            }
                        }
                        1 => {
                            for (dv, &sv) in d.iter_mut().zip(s) {
                                *dv = *dv + sv;
                            }
                        }
                        _ => {
                            for (dv, &sv) in d[1..].iter_mut().zip(&s[..w - 1]) {
                                *dv = *dv + sv;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv3x3<T: Scalar>(x: &Tensor<T>, weight: &[T], cout: usize) -> Tensor<T> {
    let s = x.shape();
    let (cin, h, w) = (s.channels, s.height, s.width);
    let k = cin * 9;
    let mut out = Tensor::zeros(s.with_channels(cout));
    if s.numel() == 0 && cin > 0 {
        return out;
    }
    let out_item = cout * h * w;
    out.data_mut()
        .par_chunks_mut(out_item.max(1))
        .enumerate()
        .for_each(|(b, dst)| {
            let item = x.item(b);
            let mut col = Vec::new();
            for (y0, rows) in tiles(h, w) {
                let p = rows * w;
                col.resize(k * p, T::zero());
                im2col(item, cin, h, w, y0, rows, &mut col);
                gemm(
                    T::one(),
                    MatRef::row_major(weight, 0, cout, k, k),
                    MatRef::row_major(&col, 0, k, p, p),
                    T::zero(),
                    dst,
                    y0 * w,
                    h * w,
                );
            }
        });
    out
}

fn conv3x3_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_pre: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let s = x.shape();
    let (cin, h, w) = (s.channels, s.height, s.width);
    let cout = weight.shape().batch;
    let k = cin * 9;
    let wdata = weight.data();
    let mut grad_x = Tensor::zeros(s);
    let item_len = s.item().max(1);
    let partials: Vec<Vec<T>> = grad_x
        .data_mut()
        .par_chunks_mut(item_len)
        .enumerate()
        .map(|(b, gx)| {
            let item = x.item(b);
            let gp = grad_pre.item(b);
            let mut gw = vec![T::zero(); cout * k];
            let mut col = Vec::new();
            let mut gcol = Vec::new();
            for (y0, rows) in tiles(h, w) {
                let p = rows * w;
                col.resize(k * p, T::zero());
                gcol.resize(k * p, T::zero());
                im2col(item, cin, h, w, y0, rows, &mut col);
                // dW += dY_tile * col^T
                gemm(
                    T::one(),
                    MatRef::row_major(gp, y0 * w, cout, p, h * w),
                    MatRef::transposed(&col, 0, p, k, p),
                    T::one(),
                    &mut gw,
                    0,
                    k,
                );
                // dcol = W^T * dY_tile
                gemm(
                    T::one(),
                    MatRef::transposed(wdata, 0, k, cout, k),
                    MatRef::row_major(gp, y0 * w, cout, p, h * w),
                    T::zero(),
                    &mut gcol,
                    0,
                    p,
                );
                col2im(&gcol, cin, h, w, y0, rows, gx);
            }
            gw
        })
        .collect();
    let mut gw = vec![T::zero(); cout * k];
    for part in &partials {
        for (a, &v) in gw.iter_mut().zip(part) {
            *a = *a + v;
        }
    }
    let gw = Tensor::from_vec(weight.shape(), gw).expect("weight gradient shape");
    (grad_x, gw)
}

fn depthwise_forward<T: Scalar>(x: &Tensor<T>, dw: &[T]) -> Tensor<T> {
    let s = x.shape();
    let (c, h, w) = (s.channels, s.height, s.width);
    let mut out = Tensor::zeros(s);
    out.data_mut()
        .par_chunks_mut((h * w).max(1))
        .enumerate()
        .for_each(|(i, dst)| {
            let (b, ch) = (i / c, i % c);
            let src = x.plane(b, ch);
            let k = &dw[ch * 9..ch * 9 + 9];
            for y in 0..h {
                for ky in 0..3 {
                    let sy = (y + ky) as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                    let drow = &mut dst[y * w..(y + 1) * w];
                    let (k0, k1, k2) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
                    for xx in 0..w {
                        let mut acc = drow[xx];
                        if xx > 0 {
                            acc = acc + k0 * srow[xx - 1];
                        }
                        acc = acc + k1 * srow[xx];
                        if xx + 1 < w {
                            acc = acc + k2 * srow[xx + 1];
                        }
                        drow[xx] = acc;
                    }
                }
            }
        });
    out
}

fn depthwise_backward<T: Scalar>(x: &Tensor<T>, dw: &Tensor<T>, grad_mid: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let s = x.shape();
    let (c, h, w) = (s.channels, s.height, s.width);
    let k = dw.data();
    let mut grad_x = Tensor::zeros(s);
    let mut grad_w = vec![T::zero(); c * 9];
    for b in 0..s.batch {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let g = grad_mid.plane(b, ch);
            let gx = grad_x.plane_mut(b, ch);
            for ky in 0..3 {
                for kx in 0..3 {
                    let kv = k[ch * 9 + ky * 3 + kx];
                    let mut acc = T::zero();
                    for y in 0..h {
                        let sy = (y + ky) as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        for xx in 0..w {
                            let sx = (xx + kx) as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let sx = sx as usize;
                            let gv = g[y * w + xx];
                            acc = acc + gv * src[sy * w + sx];
                            gx[sy * w + sx] = gx[sy * w + sx] + gv * kv;
                        }
                    }
                    grad_w[ch * 9 + ky * 3 + kx] = grad_w[ch * 9 + ky * 3 + kx] + acc;
                }
            }
        }
    }
    (grad_x, Tensor::from_vec(dw.shape(), grad_w).expect("depthwise grad shape"))
}

fn pointwise_forward<T: Scalar>(mid: &Tensor<T>, pw: &[T], cout: usize) -> Tensor<T> {
    let s = mid.shape();
    let cin = s.channels;
    let hw = s.plane();
    let mut out = Tensor::zeros(s.with_channels(cout));
    out.data_mut()
        .par_chunks_mut((cout * hw).max(1))
        .enumerate()
        .for_each(|(b, dst)| {
            gemm(
                T::one(),
                MatRef::row_major(pw, 0, cout, cin, cin),
                MatRef::row_major(mid.item(b), 0, cin, hw, hw),
                T::zero(),
                dst,
                0,
                hw,
            );
        });
    out
}

fn pointwise_backward<T: Scalar>(mid: &Tensor<T>, pw: &Tensor<T>, grad_pre: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let s = mid.shape();
    let cin = s.channels;
    let cout = pw.shape().batch;
    let hw = s.plane();
    let mut grad_mid = Tensor::zeros(s);
    let mut gw = vec![T::zero(); cout * cin];
    for b in 0..s.batch {
        let gp = grad_pre.item(b);
        gemm(
            T::one(),
            MatRef::row_major(gp, 0, cout, hw, hw),
            MatRef::transposed(mid.item(b), 0, hw, cin, hw),
            T::one(),
            &mut gw,
            0,
            cin,
        );
        gemm(
            T::one(),
            MatRef::transposed(pw.data(), 0, cin, cout, cin),
            MatRef::row_major(gp, 0, cout, hw, hw),
            T::zero(),
            grad_mid.item_mut(b),
            0,
            hw,
        );
    }
    (grad_mid, Tensor::from_vec(pw.shape(), gw).expect("pointwise grad shape"))
}
