//! Frame bundle directories and the dataset layout built from them.
//!
//! A bundle directory holds one PFM per channel and a `manifest.json`. A
//! dataset root holds `dataset.json` plus `hr/frame_%05d` and `lr/frame_%05d`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::camera::{Camera, CameraPath};
use super::pfm::{read_pfm, write_pfm};
use super::render::{render_pair_at, FrameBundle, LrMode};
use super::scene::Scene;
use crate::brdf::ShadingGBuffer;
use crate::error::{FuseError, Result};
use crate::ops::slice_channels;
use crate::tensor::{DType, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub name: String,
    pub file: String,
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub dtype: DType,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    #[serde(flatten)]
    pub camera: Camera,
    pub view_matrix: [[f64; 4]; 4],
    pub intrinsics: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub frame_index: usize,
    pub width: usize,
    pub height: usize,
    pub f0: [f32; 3],
    pub camera: CameraRecord,
    pub channels: Vec<ChannelEntry>,
}

/// Channel names in file order; `color` first, then the G-buffer.
pub const BUNDLE_CHANNELS: [(&str, usize); 8] = [
    ("color", 3),
    ("albedo", 3),
    ("roughness", 1),
    ("normal", 3),
    ("ndotv", 1),
    ("emissive", 3),
    ("depth", 1),
    ("motion", 2),
];

fn bundle_channel<'a>(b: &'a FrameBundle, name: &str) -> &'a Tensor<f32> {
    if name == "color" {
        &b.color
    } else {
        b.gbuffer.channel(name).expect("known channel")
    }
}

pub fn write_bundle(bundle: &FrameBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| FuseError::io(dir, e))?;
    let (w, h) = (bundle.width(), bundle.height());
    let mut channels = Vec::new();
    for (name, count) in BUNDLE_CHANNELS {
        let file = format!("{name}.pfm");
        write_pfm(dir.join(&file), bundle_channel(bundle, name))?;
        channels.push(ChannelEntry {
            name: name.into(),
            file,
            channels: count,
            width: w,
            height: h,
            dtype: DType::F32,
        });
    }
    let manifest = BundleManifest {
        frame_index: bundle.frame_index,
        width: w,
        height: h,
        f0: bundle.gbuffer.f0,
        camera: CameraRecord {
            camera: bundle.camera,
            view_matrix: bundle.camera.view_matrix(),
            intrinsics: bundle.camera.intrinsics(w, h),
        },
        channels,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text).map_err(|e| FuseError::io(&path, e))
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<FrameBundle> {
    let dir = dir.as_ref();
    let mpath = dir.join("manifest.json");
    let text = std::fs::read_to_string(&mpath).map_err(|e| FuseError::io(&mpath, e))?;
    let manifest: BundleManifest =
        serde_json::from_str(&text).map_err(|e| FuseError::Format(format!("{}: {e}", mpath.display())))?;
    let mut loaded: Vec<Tensor<f32>> = Vec::with_capacity(BUNDLE_CHANNELS.len());
    for (name, count) in BUNDLE_CHANNELS {
        let entry = manifest
            .channels
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| FuseError::schema(name, "not listed in manifest"))?;
        if entry.channels != count || entry.width != manifest.width || entry.height != manifest.height {
            return Err(FuseError::schema(
                name,
                format!(
                    "manifest declares {}x{}x{}, expected {count} channels at {}x{}",
                    entry.channels, entry.width, entry.height, manifest.width, manifest.height
                ),
            ));
        }
        let path = dir.join(&entry.file);
        if !path.exists() {
            return Err(FuseError::schema(name, format!("missing file {}", path.display())));
        }
        let mut t = read_pfm(&path)?;
        let s = t.shape();
        if s.width != manifest.width || s.height != manifest.height {
            return Err(FuseError::schema(name, format!("file is {}x{}", s.width, s.height)));
        }
        if count == 2 {
            t = slice_channels(&t, 0, 2)?;
        } else if s.channels != count {
            return Err(FuseError::schema(name, format!("file has {} channels, expected {count}", s.channels)));
        }
        loaded.push(t);
    }
    let mut it = loaded.into_iter();
    let mut next = || it.next().expect("one tensor per channel");
    let color = next();
    let gbuffer = ShadingGBuffer {
        albedo: next(),
        roughness: next(),
        normal: next(),
        ndotv: next(),
        emissive: next(),
        depth: next(),
        motion: next(),
        f0: manifest.f0,
    };
    Ok(FrameBundle {
        color,
        gbuffer,
        camera: manifest.camera.camera,
        frame_index: manifest.frame_index,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scene_seed: u64,
    pub path_seed: u64,
    pub frames: usize,
    pub hr_width: usize,
    pub hr_height: usize,
    pub r: usize,
    pub lr_mode: LrMode,
    pub train_frames: Vec<usize>,
    pub test_frames: Vec<usize>,
}

impl DatasetManifest {
    /// First 80% of frames train, the rest are held out.
    pub fn new(scene_seed: u64, path_seed: u64, frames: usize, hr: (usize, usize), r: usize, lr_mode: LrMode) -> Self {
        let n_train = if frames < 2 { frames } else { (frames * 4).div_ceil(5).min(frames - 1) };
        DatasetManifest {
            scene_seed,
            path_seed,
            frames,
            hr_width: hr.0,
            hr_height: hr.1,
            r,
            lr_mode,
            train_frames: (0..n_train).collect(),
            test_frames: (n_train..frames).collect(),
        }
    }
}

pub fn frame_dir(root: impl AsRef<Path>, level: &str, index: usize) -> PathBuf {
    root.as_ref().join(level).join(format!("frame_{index:05}"))
}

/// A whole sequence held in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// `(HR, LR)` per frame index.
    pub frames: Vec<(FrameBundle, FrameBundle)>,
}

impl Dataset {
    pub fn generate(manifest: DatasetManifest) -> Result<Self> {
        let m = &manifest;
        if m.r == 0 || m.hr_width % m.r != 0 || m.hr_height % m.r != 0 {
            return Err(FuseError::Alignment {
                op: "dataset",
                shape: crate::tensor::Shape::new(1, 3, m.hr_height, m.hr_width),
                factor: m.r,
            });
        }
        let scene = Scene::generate(m.scene_seed);
        let path = CameraPath::pan(m.path_seed);
        let frames = (0..m.frames)
            .map(|i| render_pair_at(&scene, &path, i, (m.hr_width, m.hr_height), m.r, m.lr_mode))
            .collect();
        Ok(Dataset { manifest, frames })
    }

    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        std::fs::create_dir_all(root).map_err(|e| FuseError::io(root, e))?;
        for (hr, lr) in &self.frames {
            write_bundle(hr, frame_dir(root, "hr", hr.frame_index))?;
            write_bundle(lr, frame_dir(root, "lr", lr.frame_index))?;
        }
        let path = root.join("dataset.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, text).map_err(|e| FuseError::io(&path, e))
    }

    pub fn read(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let path = root.join("dataset.json");
        let text = std::fs::read_to_string(&path).map_err(|e| FuseError::io(&path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| FuseError::Format(format!("{}: {e}", path.display())))?;
        let frames = (0..manifest.frames)
            .map(|i| Ok((read_bundle(frame_dir(root, "hr", i))?, read_bundle(frame_dir(root, "lr", i))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, frames })
    }
}
