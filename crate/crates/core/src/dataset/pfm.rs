//! Portable float maps: `PF` (RGB) and `Pf` (grey), rows stored bottom-up.

use std::path::Path;

use crate::error::{FuseError, Result};
use crate::tensor::{Shape, Tensor};

/// Encode a `(1, c, h, w)` tensor. Two-channel data is padded with a zero
/// third channel.
pub fn encode_pfm(t: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = t.shape();
    if s.batch != 1 || !(1..=3).contains(&s.channels) {
        return Err(FuseError::shape("encode_pfm", "(1, 1..=3, h, w)", s));
    }
    let file_c = if s.channels == 1 { 1 } else { 3 };
    let tag = if file_c == 1 { "Pf" } else { "PF" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", s.width, s.height).into_bytes();
    out.reserve(s.plane() * file_c * 4);
    for y in (0..s.height).rev() {
        for x in 0..s.width {
            for c in 0..file_c {
                let v = if c < s.channels { t.at(0, c, y, x) } else { 0.0 };
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(FuseError::Format("truncated PFM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| FuseError::Format("non-ASCII PFM header".into()))
}

/// Decode to a `(1, c, h, w)` tensor with `c` = 1 or 3.
pub fn decode_pfm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut pos = 0;
    let c = match next_token(bytes, &mut pos)? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(FuseError::Format(format!("bad PFM magic {other:?}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| FuseError::Format(format!("bad PFM dimension {s:?}")));
    let w = parse(next_token(bytes, &mut pos)?)?;
    let h = parse(next_token(bytes, &mut pos)?)?;
    let scale: f32 = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| FuseError::Format("bad PFM scale".into()))?;
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = w * h * c * 4;
    if bytes.len() < pos + need {
        return Err(FuseError::Format(format!(
            "PFM raster is {} bytes, expected {need}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let little = scale < 0.0;
    let raster = &bytes[pos..pos + need];
    let mut out = Tensor::zeros(Shape::new(1, c, h, w));
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().expect("4 bytes");
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let ch = i % c;
        let px = i / c;
        let (row, x) = (px / w, px % w);
        out.set(0, ch, h - 1 - row, x, v);
    }
    Ok(out)
}

pub fn write_pfm(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm(t)?).map_err(|e| FuseError::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FuseError::io(path, e))?;
    decode_pfm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rgb_and_grey() {
        let rgb = Tensor::from_fn([1, 3, 3, 5], |_, c, y, x| (c * 100 + y * 10 + x) as f32 * 0.37 - 4.0);
        assert_eq!(decode_pfm(&encode_pfm(&rgb).unwrap()).unwrap(), rgb);
        let g = Tensor::from_fn([1, 1, 4, 2], |_, _, y, x| (y * 2 + x) as f32);
        assert_eq!(decode_pfm(&encode_pfm(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn rows_are_bottom_up() {
        let g = Tensor::from_vec([1, 1, 2, 1], vec![1.0f32, 2.0]).unwrap();
        let bytes = encode_pfm(&g).unwrap();
        let raster = &bytes[bytes.len() - 8..];
        assert_eq!(f32::from_le_bytes(raster[..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn truncated_raster_rejected() {
        let g = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let bytes = encode_pfm(&g).unwrap();
        assert!(decode_pfm(&bytes[..bytes.len() - 1]).is_err());
    }
}
