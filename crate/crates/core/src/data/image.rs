//! Grayscale PGM (P5) I/O and bilinear resampling.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::DataError;

use super::manifest::Manifest;
use super::Dataset;

/// Binary 8-bit graymap bytes for a `width x height` image.
pub fn encode_pgm(pixels: &[u8], width: usize, height: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count does not match dimensions");
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::L8)
        .expect("in-memory PGM encoding cannot fail");
    out
}

/// Decode any PNM image to grayscale in `[0, 1]`; returns `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), String> {
    let img = image::ImageReader::with_format(Cursor::new(bytes), ImageFormat::Pnm)
        .decode()
        .map_err(|e| e.to_string())?;
    let gray = img.to_luma32f();
    Ok((gray.width() as usize, gray.height() as usize, gray.into_raw()))
}

/// Bilinear resampling with half-pixel centers and edge clamping. An exact
/// 2x reduction therefore averages each 2x2 block.
pub fn resize_bilinear(src: &[f32], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    assert_eq!(src.len(), width * height);
    if width == out_w && height == out_h {
        return src.to_vec();
    }
    let taps = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f32) {
        let scale = n_in as f64 / n_out as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, (pos - lo as f64) as f32)
    };
    let xs: Vec<_> = (0..out_w).map(|x| taps(x, width, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = taps(y, height, out_h);
        let (r0, r1) = (&src[y0 * width..][..width], &src[y1 * width..][..width]);
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
            let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

pub(crate) fn load_image(path: &Path, entry: &str, size: usize) -> Result<Vec<f32>, DataError> {
    let err = |detail: String| DataError::Image { entry: entry.to_string(), detail };
    let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
    let (w, h, pixels) = decode_pgm(&bytes).map_err(err)?;
    Ok(resize_bilinear(&pixels, w, h, size, size))
}

/// Decode every manifest entry as grayscale, resized to `image_size` squared.
pub fn load_dataset(manifest: &Manifest, image_size: usize) -> Result<Dataset, DataError> {
    if image_size == 0 {
        return Err(DataError::Invalid("image size must be positive".into()));
    }
    let mut pixels = Vec::with_capacity(manifest.len() * image_size * image_size);
    for e in &manifest.entries {
        let name = e.path.display().to_string();
        pixels.extend(load_image(&manifest.resolve(e), &name, image_size)?);
    }
    Ok(Dataset::new(1, image_size, pixels, manifest.entries.iter().map(|e| e.label).collect()))
}
