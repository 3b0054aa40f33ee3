//! Procedural paired LR/HR frame sequences with full G-buffers.

mod camera;
mod io;
mod pfm;
mod render;
mod scene;

pub use camera::{Camera, CameraPath};
pub use io::{
    frame_dir, read_bundle, write_bundle, BundleManifest, CameraRecord, ChannelEntry, Dataset, DatasetManifest,
    BUNDLE_CHANNELS,
};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use render::{
    render_frame, render_frame_at, render_pair, render_pair_at, render_sequence, shade_sample, FrameBundle, LrMode,
    Sample, NDOTV_EPS, SKY_DEPTH,
};
pub use scene::{Bump, Light, Material, Object, Primitive, Scene, Texture, Vec3};
