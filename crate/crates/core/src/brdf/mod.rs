//! Split-sum BRDF pre-integration and material demodulation.

mod demod;
mod gbuffer;
mod lut;
pub mod microfacet;

pub use demod::{build_fbeta_map, demodulate, fbeta_pixel, remodulate, remodulate_backward};
pub use gbuffer::{FbetaMode, ShadingGBuffer, GBUFFER_CHANNELS};
pub use lut::{
    integrate_cell, mix_seed, precompute_lut, CellEstimate, EnvBrdfLut, DEFAULT_LUT_SAMPLES, DEFAULT_LUT_SIZE, NDOTV_FLOOR,
};
