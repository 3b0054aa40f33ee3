//! The H-shaped super-resolution network: an LR encoder, a fusion backbone
//! fed with unshuffled HR G-buffers, and a pixel-shuffle head.

mod check;
mod config;
mod model;
mod weights;

pub use check::gradcheck_model;
pub use config::{default_gbuffer_schema, schema_width, Alignment, GChannel, HNetConfig, Variant};
pub use model::{ForwardTrace, HNetInput, HNetModel, InputGrads, ResBlock, StageMacs};
pub use weights::{
    load_model_dir, load_weights, save_model_dir, save_weights, tensors_from_bytes, tensors_to_bytes, weights_from_bytes, weights_to_bytes, TensorEntry,
    WeightsHeader, WEIGHTS_MAGIC,
};
