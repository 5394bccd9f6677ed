//! Datasets, manifests and the preprocessing around them.

mod image;
mod manifest;
mod split;
mod synth;

pub use self::image::{decode_pgm, encode_pgm, load_dataset, resize_bilinear};
pub use manifest::{Manifest, ManifestEntry};
pub use split::{label_ratio_subset, stratified_split, SplitSpec};
pub use synth::{generate_synthetic, SynthSpec, SyntheticSet};

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Decoded images in memory: `[N, channels, size, size]` pixels in `[0, 1]`
/// plus an optional label per image.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub channels: usize,
    pub size: usize,
    pub pixels: Vec<f32>,
    pub labels: Vec<Option<usize>>,
}

impl Dataset {
    pub fn new(channels: usize, size: usize, pixels: Vec<f32>, labels: Vec<Option<usize>>) -> Self {
        assert_eq!(pixels.len(), labels.len() * channels * size * size, "pixel buffer does not match labels");
        Self { channels, size, pixels, labels }
    }

    pub fn empty(channels: usize, size: usize) -> Self {
        Self::new(channels, size, Vec::new(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.size * self.size
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.size, self.size]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        Self::new(self.channels, self.size, pixels, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Same images with every label removed.
    pub fn without_labels(&self) -> Self {
        Self { labels: vec![None; self.len()], ..self.clone() }
    }

    /// Stack the given images into a `[B, C, S, S]` tensor.
    pub fn batch_tensor<T: Scalar>(&self, indices: &[usize]) -> Result<Tensor<T>, TensorError> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64_lossy(f64::from(v))));
        }
        Tensor::new(data, &[indices.len(), self.channels, self.size, self.size])
    }
}
