//! Glue between rendered frames and the network: feature preparation,
//! super-resolution and upsampling baselines.

mod features;
mod upsample;

pub use features::{gbuffer_tensor, prepare_frame, super_resolve, FrameFeatures};
pub use upsample::{bicubic_upsample, bilinear_upsample};
