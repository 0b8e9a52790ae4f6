//! PNG / PNM decoding and encoding, plus atomic file writes.

use std::io::{Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BinaryMask, Image, Kernel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Decodes a PNG, PPM or PGM file into a normalized image. Alpha is dropped;
/// gray inputs yield one channel, color inputs three.
pub fn read_image(path: &Path) -> Result<(Image, BitDepth)> {
    let decoded = image::open(path).map_err(|e| Error::from(e).at_path(path))?;
    Ok(from_dynamic(decoded))
}

pub fn decode_image(bytes: &[u8]) -> Result<(Image, BitDepth)> {
    Ok(from_dynamic(image::load_from_memory(bytes)?))
}

fn from_dynamic(decoded: DynamicImage) -> (Image, BitDepth) {
    let color = decoded.color();
    let depth = if color.bytes_per_pixel() / color.channel_count() >= 2 {
        BitDepth::Sixteen
    } else {
        BitDepth::Eight
    };
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let gray = !color.has_color();
    let max = depth.max_code();
    let image = match (gray, depth) {
        (true, BitDepth::Eight) => {
            let buf = decoded.into_luma8();
            Image::from_fn(w, h, 1, |x, y, _| buf.get_pixel(x as u32, y as u32)[0] as f64 / max)
        }
        (true, BitDepth::Sixteen) => {
            let buf = decoded.into_luma16();
            Image::from_fn(w, h, 1, |x, y, _| buf.get_pixel(x as u32, y as u32)[0] as f64 / max)
        }
        (false, BitDepth::Eight) => {
            let buf = decoded.into_rgb8();
            Image::from_fn(w, h, 3, |x, y, c| buf.get_pixel(x as u32, y as u32)[c] as f64 / max)
        }
        (false, BitDepth::Sixteen) => {
            let buf = decoded.into_rgb16();
            Image::from_fn(w, h, 3, |x, y, c| buf.get_pixel(x as u32, y as u32)[c] as f64 / max)
        }
    };
    (image, depth)
}

/// Reads a single-channel mask, thresholded at 0.5.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let (image, _) = read_image(path)?;
    Ok(BinaryMask::from_image(&image))
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// PNG bytes for `image`, values clamped to `[0, 1]` and rounded.
pub fn encode_png(image: &Image, depth: BitDepth) -> Result<Vec<u8>> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let max = depth.max_code();
    let dynamic = match (image.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([quantize(image.get(x as usize, y as usize, 0), max) as u8])
        })),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([quantize(image.get(x as usize, y as usize, 0), max) as u16])
        })),
        (_, BitDepth::Eight) => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            Rgb(std::array::from_fn(|c| {
                quantize(image.get(x as usize, y as usize, c), max) as u8
            }))
        })),
        (_, BitDepth::Sixteen) => DynamicImage::ImageRgb16(ImageBuffer::from_fn(w, h, |x, y| {
            Rgb(std::array::from_fn(|c| {
                quantize(image.get(x as usize, y as usize, c), max) as u16
            }))
        })),
    };
    let mut bytes = Vec::new();
    dynamic.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    Ok(bytes)
}

/// Binary 16-bit PGM (P5, maxval 65535) of raw code values.
pub fn encode_pgm16(width: usize, height: usize, codes: &[u16]) -> Result<Vec<u8>> {
    if codes.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} PGM needs {} samples, got {}",
            width * height,
            codes.len()
        )));
    }
    // image's graymap encoder only writes 8-bit samples.
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    bytes.extend(codes.iter().flat_map(|c| c.to_be_bytes()));
    Ok(bytes)
}

/// Kernel heatmap as 16-bit PGM, scaled so the peak weight maps to 65535.
pub fn encode_kernel_heatmap(kernel: &Kernel) -> Result<Vec<u8>> {
    let peak = kernel.max_weight();
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    let codes: Vec<u16> = kernel
        .weights()
        .iter()
        .map(|&w| (w * scale).round().clamp(0.0, 65535.0) as u16)
        .collect();
    encode_pgm16(kernel.size(), kernel.size(), &codes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename. Returns the hex SHA-256 of the contents.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<String> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(sha256_hex(bytes))
}

pub fn write_png(path: &Path, image: &Image, depth: BitDepth) -> Result<String> {
    write_atomic(path, &encode_png(image, depth)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_8_and_16_bit() {
        let img = Image::from_fn(4, 3, 3, |x, y, c| ((x + 2 * y + 5 * c) % 256) as f64 / 255.0);
        let (back, depth) = decode_image(&encode_png(&img, BitDepth::Eight).unwrap()).unwrap();
        assert_eq!(depth, BitDepth::Eight);
        assert_eq!(back, img);

        let gray = Image::from_fn(5, 2, 1, |x, y, _| (x * 1000 + y * 7) as f64 / 65535.0);
        let (back, depth) = decode_image(&encode_png(&gray, BitDepth::Sixteen).unwrap()).unwrap();
        assert_eq!(depth, BitDepth::Sixteen);
        assert_eq!(back, gray);
    }

    #[test]
    fn pgm16_header_and_payload() {
        let bytes = encode_pgm16(2, 1, &[1, 65535]).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.starts_with("P5"), "{text}");
        assert!(bytes.ends_with(&[0x00, 0x01, 0xff, 0xff]));
        let (img, depth) = decode_image(&bytes).unwrap();
        assert_eq!(depth, BitDepth::Sixteen);
        assert_eq!(img.get(1, 0, 0), 1.0);
    }

    #[test]
    fn mask_threshold_at_half() {
        let img = Image::from_vec(3, 1, 1, vec![0.2, 0.5, 0.9]).unwrap();
        let mask = BinaryMask::from_image(&img);
        assert_eq!(mask.bits(), &[false, true, true]);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.bin");
        let d1 = write_atomic(&path, b"one").unwrap();
        let d2 = write_atomic(&path, b"two").unwrap();
        assert_ne!(d1, d2);
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(d2, sha256_hex(b"two"));
    }
}
