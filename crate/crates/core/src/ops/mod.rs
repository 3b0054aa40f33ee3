//! Layer kernels with forward and backward passes.

pub mod conv;
pub mod elementwise;
pub mod pool;
pub mod shuffle;
pub mod warp;

pub use conv::{
    conv2d_backward, conv2d_backward_cached, conv2d_forward, Activation, ConvGrads, ConvKernel, ConvLayer,
    ConvVariant,
};
pub use elementwise::{
    concat_channels, elementwise_div, elementwise_div_backward_a, elementwise_mul, elementwise_mul_backward,
    slice_channels, split_channels, sum_channels, DEFAULT_DIV_EPS,
};
pub use pool::{avg_pool, avg_pool_backward, max_pool, max_pool_backward};
pub use shuffle::{pixel_shuffle, pixel_shuffle_backward, pixel_unshuffle, pixel_unshuffle_backward};
pub use warp::{warp_bilinear, warp_bilinear_backward};
