//! Seeded synthetic grayscale images with a skewed class histogram.
//!
//! Class 0 is a smooth diagonal intensity ramp, class 1 a field of soft
//! Gaussian blobs, class 2 the same blob field with a small bright rectangle.
//! Further classes reuse the blob field with the rectangle moved. Each image
//! is its class template plus i.i.d. Gaussian noise, clamped to `[0, 1]` and
//! quantized to 8 bits.

use std::path::Path;

use crate::error::DataError;
use crate::rng::{tags, RngState};

use super::image::{encode_pgm, resize_bilinear};
use super::manifest::{Manifest, ManifestEntry};
use super::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub class_counts: Vec<usize>,
    pub image_size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { class_counts: vec![2000, 2200, 25], image_size: 32, noise_sigma: 0.1, seed: 0 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.class_counts.iter().filter(|&&n| n > 0).count() < 2 {
            return Err(DataError::Invalid("at least two classes need a nonzero count".into()));
        }
        if self.image_size < 4 {
            return Err(DataError::Invalid(format!("image size must be >= 4, got {}", self.image_size)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(DataError::Invalid(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// Generated images (8-bit, row-major) and their manifest, in class-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub size: usize,
    pub images: Vec<Vec<u8>>,
    pub manifest: Manifest,
}

const BLOBS: [(f64, f64, f64, f64); 3] = [(0.30, 0.35, 0.30, 0.12), (0.70, 0.60, 0.30, 0.15), (0.45, 0.78, 0.20, 0.10)];
const RECT: (f64, f64, f64, f64) = (0.58, 0.22, 0.20, 0.16);
const RECT_BOOST: f64 = 0.35;

pub fn class_name(class: usize) -> String {
    match class {
        0 => "gradient".into(),
        1 => "blob_field".into(),
        2 => "blob_rect".into(),
        k => format!("blob_rect{k}"),
    }
}

/// Noise-free template for `class` at `u, v` in the unit square.
fn template(class: usize, u: f64, v: f64) -> f64 {
    if class == 0 {
        return 0.25 + 0.5 * (0.6 * u + 0.4 * v);
    }
    let field: f64 = BLOBS
        .iter()
        .map(|&(cx, cy, a, s)| a * (-((u - cx).powi(2) + (v - cy).powi(2)) / (2.0 * s * s)).exp())
        .sum();
    let base = 0.25 + field;
    if class == 1 {
        return base.min(1.0);
    }
    // class 2 uses RECT as is; later classes slide it down and left
    let shift = (class - 2) as f64 * 0.17;
    let (x0, y0, w, h) = RECT;
    let (x0, y0) = ((x0 - shift).rem_euclid(0.8), (y0 + shift).rem_euclid(0.8));
    let inside = (x0..x0 + w).contains(&u) && (y0..y0 + h).contains(&v);
    (if inside { base + RECT_BOOST } else { base }).min(1.0)
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticSet, DataError> {
    spec.validate()?;
    let s = spec.image_size;
    let root = RngState::new(spec.seed);
    let names: Vec<String> = (0..spec.class_counts.len()).map(class_name).collect();
    let mut images = Vec::new();
    let mut entries = Vec::new();
    for (class, &count) in spec.class_counts.iter().enumerate() {
        let tpl: Vec<f64> = (0..s * s)
            .map(|i| template(class, ((i % s) as f64 + 0.5) / s as f64, ((i / s) as f64 + 0.5) / s as f64))
            .collect();
        for idx in 0..count {
            let mut rng = root.path(&[tags::SYNTH, class as u64, idx as u64]);
            let px = tpl
                .iter()
                .map(|&t| {
                    let v = if spec.noise_sigma > 0.0 { t + spec.noise_sigma * rng.normal() } else { t };
                    (v.clamp(0.0, 1.0) * 255.0).round() as u8
                })
                .collect();
            images.push(px);
            entries.push(ManifestEntry {
                path: format!("images/{class}_{idx:05}.pgm").into(),
                label: Some(class),
                class_name: names[class].clone(),
            });
        }
    }
    Ok(SyntheticSet { size: s, images, manifest: Manifest::new(entries, names, "") })
}

impl SyntheticSet {
    /// Write `manifest.csv` and `images/*.pgm` under `dir`; returns the
    /// manifest rooted there.
    pub fn write(&self, dir: &Path) -> Result<Manifest, DataError> {
        std::fs::create_dir_all(dir.join("images"))?;
        for (img, e) in self.images.iter().zip(&self.manifest.entries) {
            std::fs::write(dir.join(&e.path), encode_pgm(img, self.size, self.size))?;
        }
        let manifest = Manifest { root: dir.to_path_buf(), ..self.manifest.clone() };
        manifest.write(&dir.join("manifest.csv"))?;
        Ok(manifest)
    }

    /// Decode in memory exactly as [`load_dataset`](super::load_dataset)
    /// would after a round trip through disk.
    pub fn to_dataset(&self, image_size: usize) -> Dataset {
        let mut pixels = Vec::with_capacity(self.images.len() * image_size * image_size);
        for img in &self.images {
            let f: Vec<f32> = img.iter().map(|&v| v as f32 / 255.0).collect();
            pixels.extend(resize_bilinear(&f, self.size, self.size, image_size, image_size));
        }
        Dataset::new(1, image_size, pixels, self.manifest.entries.iter().map(|e| e.label).collect())
    }

    /// Dataset restricted to the manifest entries listed in `subset`, matched
    /// by path. Labels come from `subset`, so stripped entries stay unlabeled.
    pub fn dataset_for(&self, subset: &Manifest, image_size: usize) -> Result<Dataset, DataError> {
        let index: std::collections::HashMap<_, _> =
            self.manifest.entries.iter().enumerate().map(|(i, e)| (e.path.clone(), i)).collect();
        let picks = subset
            .entries
            .iter()
            .map(|e| {
                index
                    .get(&e.path)
                    .copied()
                    .ok_or_else(|| DataError::Invalid(format!("`{}` is not part of this set", e.path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let full = self.to_dataset(image_size).select(&picks);
        Ok(Dataset { labels: subset.entries.iter().map(|e| e.label).collect(), ..full })
    }
}
