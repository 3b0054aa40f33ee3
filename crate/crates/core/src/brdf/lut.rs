//! Split-sum environment BRDF table.
//!
//! For each `(roughness, n·v)` node the table stores `(A, B)` such that the
//! hemispherical integral of the GGX specular lobe times `n·l` equals
//! `F0 * A + B` under Schlick's Fresnel. Cells are integrated with
//! visible-normal importance sampling over a rotated Hammersley set; each cell
//! draws its rotation from a stream seeded by `(seed, cell index)`, so the
//! table does not depend on how cells are scheduled across threads.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::microfacet::{alpha_from_roughness, reflect, sample_vndf, schlick_weight, smith_g1, smith_g2};
use crate::error::{FuseError, Result};

pub const DEFAULT_LUT_SIZE: usize = 32;
pub const DEFAULT_LUT_SAMPLES: u32 = 1024;
/// Smallest `n·v` represented; queries below it are clamped.
pub const NDOTV_FLOOR: f64 = 1e-2;

const MAGIC: &[u8; 7] = b"SSLUT01";

#[derive(Clone, Debug, PartialEq)]
pub struct EnvBrdfLut {
    n_roughness: usize,
    n_ndotv: usize,
    sample_count: u32,
    seed: u64,
    /// Row-major over roughness, then `n·v`.
    entries: Vec<[f32; 2]>,
}

/// One cell's Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct CellEstimate {
    pub scale: f64,
    pub bias: f64,
    pub scale_std_err: f64,
    pub bias_std_err: f64,
}

pub fn mix_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined words.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn radical_inverse(mut i: u32) -> f64 {
    i = i.rotate_right(16);
    i = ((i & 0x5555_5555) << 1) | ((i & 0xAAAA_AAAA) >> 1);
    i = ((i & 0x3333_3333) << 2) | ((i & 0xCCCC_CCCC) >> 2);
    i = ((i & 0x0F0F_0F0F) << 4) | ((i & 0xF0F0_F0F0) >> 4);
    i = ((i & 0x00FF_00FF) << 8) | ((i & 0xFF00_FF00) >> 8);
    i as f64 * (1.0 / 4_294_967_296.0)
}

/// Integrate one cell with `samples` importance samples.
pub fn integrate_cell(roughness: f64, ndotv: f64, samples: u32, seed: u64) -> CellEstimate {
    let samples = samples.max(1);
    let ndotv = ndotv.clamp(NDOTV_FLOOR, 1.0);
    let alpha = alpha_from_roughness(roughness);
    let v = [(1.0 - ndotv * ndotv).max(0.0).sqrt(), 0.0, ndotv];
    let g1v = smith_g1(ndotv, alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: (f64, f64) = (rng.gen(), rng.gen());

    let (mut sa, mut sb, mut sa2, mut sb2) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..samples {
        let u1 = (i as f64 / samples as f64 + shift.0).fract();
        let u2 = (radical_inverse(i) + shift.1).fract();
        let h = sample_vndf(v, alpha, u1, u2);
        let l = reflect(v, h);
        if l[2] <= 0.0 {
            continue;
        }
        let v_dot_h = (v[0] * h[0] + v[1] * h[1] + v[2] * h[2]).max(0.0);
        let weight = smith_g2(ndotv, l[2], alpha) / g1v;
        let fc = schlick_weight(v_dot_h);
        let a = (1.0 - fc) * weight;
        let b = fc * weight;
        sa += a;
        sb += b;
        sa2 += a * a;
        sb2 += b * b;
    }
    let n = samples as f64;
    let (ma, mb) = (sa / n, sb / n);
    let se = |m: f64, m2: f64| ((m2 / n - m * m).max(0.0) / n).sqrt();
    CellEstimate {
        scale: ma,
        bias: mb,
        scale_std_err: se(ma, sa2),
        bias_std_err: se(mb, sb2),
    }
}

/// Build an `n_roughness x n_ndotv` table with `samples` per cell.
pub fn precompute_lut(n_roughness: usize, n_ndotv: usize, samples: u32, seed: u64) -> Result<EnvBrdfLut> {
    if n_roughness < 2 || n_ndotv < 2 {
        return Err(FuseError::Config(format!(
            "LUT grid must be at least 2x2, got {n_roughness}x{n_ndotv}"
        )));
    }
    if samples == 0 {
        return Err(FuseError::Config("LUT needs at least one sample per cell".into()));
    }
    let entries = (0..n_roughness * n_ndotv)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / n_ndotv, cell % n_ndotv);
            let est = integrate_cell(
                node_roughness(i, n_roughness),
                node_ndotv(j, n_ndotv),
                samples,
                mix_seed(seed, cell as u64),
            );
            [est.scale as f32, est.bias as f32]
        })
        .collect();
    Ok(EnvBrdfLut {
        n_roughness,
        n_ndotv,
        sample_count: samples,
        seed,
        entries,
    })
}

fn node_roughness(i: usize, n: usize) -> f64 {
    i as f64 / (n - 1) as f64
}

fn node_ndotv(j: usize, n: usize) -> f64 {
    NDOTV_FLOOR + (1.0 - NDOTV_FLOOR) * j as f64 / (n - 1) as f64
}

impl EnvBrdfLut {
    /// The 32x32, 1024-sample table used at runtime.
    pub fn default_table(seed: u64) -> Self {
        precompute_lut(DEFAULT_LUT_SIZE, DEFAULT_LUT_SIZE, DEFAULT_LUT_SAMPLES, seed).expect("valid default grid")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_roughness, self.n_ndotv)
    }

    pub fn sample_count(&self) -> u32 {
        self.sample_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn roughness_at(&self, i: usize) -> f64 {
        node_roughness(i, self.n_roughness)
    }

    pub fn ndotv_at(&self, j: usize) -> f64 {
        node_ndotv(j, self.n_ndotv)
    }

    /// Stored `(A, B)` of node `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> (f32, f32) {
        let e = self.entries[i * self.n_ndotv + j];
        (e[0], e[1])
    }

    pub fn entries(&self) -> &[[f32; 2]] {
        &self.entries
    }

    /// Bilinear lookup; inputs are clamped into the grid domain.
    pub fn query(&self, roughness: f64, ndotv: f64) -> (f64, f64) {
        let r = if roughness.is_nan() { 0.0 } else { roughness.clamp(0.0, 1.0) };
        let v = if ndotv.is_nan() { 1.0 } else { ndotv.clamp(NDOTV_FLOOR, 1.0) };
        let tr = r * (self.n_roughness - 1) as f64;
        let tv = (v - NDOTV_FLOOR) / (1.0 - NDOTV_FLOOR) * (self.n_ndotv - 1) as f64;
        let i0 = (tr.floor() as usize).min(self.n_roughness - 1);
        let j0 = (tv.floor() as usize).min(self.n_ndotv - 1);
        let i1 = (i0 + 1).min(self.n_roughness - 1);
        let j1 = (j0 + 1).min(self.n_ndotv - 1);
        let fr = tr - i0 as f64;
        let fv = tv - j0 as f64;
        let lerp = |k: usize| {
            let e = |i: usize, j: usize| self.entries[i * self.n_ndotv + j][k] as f64;
            let top = e(i0, j0) * (1.0 - fv) + e(i0, j1) * fv;
            let bot = e(i1, j0) * (1.0 - fv) + e(i1, j1) * fv;
            top * (1.0 - fr) + bot * fr
        };
        (lerp(0), lerp(1))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 20 + self.entries.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_roughness as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_ndotv as u32).to_le_bytes());
        out.extend_from_slice(&self.sample_count.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e[0].to_le_bytes());
            out.extend_from_slice(&e[1].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = MAGIC.len() + 4 + 4 + 4 + 8;
        if bytes.len() < header || &bytes[..MAGIC.len()] != MAGIC {
            return Err(FuseError::Format("not an SSLUT01 table".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let n_roughness = u32_at(7) as usize;
        let n_ndotv = u32_at(11) as usize;
        let sample_count = u32_at(15);
        let seed = u64::from_le_bytes(bytes[19..27].try_into().expect("8 bytes"));
        if n_roughness < 2 || n_ndotv < 2 {
            return Err(FuseError::Format(format!("degenerate LUT dims {n_roughness}x{n_ndotv}")));
        }
        let expected = header + n_roughness * n_ndotv * 8;
        if bytes.len() != expected {
            return Err(FuseError::Format(format!(
                "LUT payload is {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let entries = bytes[header..]
            .chunks_exact(8)
            .map(|c| {
                [
                    f32::from_le_bytes(c[..4].try_into().expect("4 bytes")),
                    f32::from_le_bytes(c[4..].try_into().expect("4 bytes")),
                ]
            })
            .collect();
        Ok(EnvBrdfLut {
            n_roughness,
            n_ndotv,
            sample_count,
            seed,
            entries,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| FuseError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| FuseError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| FuseError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EnvBrdfLut {
        precompute_lut(8, 8, 256, 7).unwrap()
    }

    #[test]
    fn furnace_bound_holds_everywhere() {
        let lut = small();
        for e in lut.entries() {
            assert!(e[0] >= 0.0 && e[1] >= 0.0);
            assert!(e[0] + e[1] <= 1.0 + 1e-3, "{e:?}");
        }
    }

    #[test]
    fn query_is_exact_at_nodes_and_mean_midway() {
        let lut = small();
        for i in 0..8 {
            for j in 0..8 {
                let (a, b) = lut.query(lut.roughness_at(i), lut.ndotv_at(j));
                let (ca, cb) = lut.cell(i, j);
                assert!((a - ca as f64).abs() < 1e-6 && (b - cb as f64).abs() < 1e-6);
            }
        }
        let r = 0.5 * (lut.roughness_at(2) + lut.roughness_at(3));
        let (a, b) = lut.query(r, lut.ndotv_at(5));
        let (a2, b2) = lut.cell(2, 5);
        let (a3, b3) = lut.cell(3, 5);
        assert!((a - 0.5 * (a2 as f64 + a3 as f64)).abs() < 1e-6);
        assert!((b - 0.5 * (b2 as f64 + b3 as f64)).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_roughness_clamps() {
        let lut = small();
        assert_eq!(lut.query(1.5, 0.4), lut.query(1.0, 0.4));
        assert_eq!(lut.query(0.3, 0.0), lut.query(0.3, NDOTV_FLOOR));
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(small(), small());
        assert_ne!(small(), precompute_lut(8, 8, 256, 8).unwrap());
    }

    #[test]
    fn file_round_trip_and_truncation() {
        let lut = small();
        let bytes = lut.to_bytes();
        assert_eq!(EnvBrdfLut::from_bytes(&bytes).unwrap(), lut);
        assert!(EnvBrdfLut::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(EnvBrdfLut::from_bytes(b"SSLUT02").is_err());
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(precompute_lut(1, 8, 16, 0).is_err());
        assert!(precompute_lut(8, 8, 0, 0).is_err());
    }
}
