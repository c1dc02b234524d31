//! MNIST preprocessing: scale to [0, 1], zero-pad to 32x32, standardize.

use std::path::Path;

use htnet_core::{Real, Tensor4};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mnist::{load_split, RawMnist, Split};

pub const MNIST_MEAN: f32 = 0.1307;
pub const MNIST_STD: f32 = 0.3081;
pub const PAD: usize = 2;
pub const CLASSES: usize = 10;

/// Preprocessed images `(n, 1, side, side)` with labels in `0..CLASSES`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor4<f32>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Tensor4<f32>, labels: Vec<u8>) -> Result<Self> {
        if images.batch() != labels.len() {
            return Err(Error::Config(format!(
                "{} images but {} labels",
                images.batch(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::Config(format!("label {bad} outside 0..{CLASSES}")));
        }
        Ok(Self { images, labels })
    }

    /// Applies the pixel pipeline to raw 8-bit images.
    pub fn from_raw(raw: &RawMnist) -> Result<Self> {
        let (rows, cols) = (raw.rows, raw.cols);
        let side = rows.max(cols) + 2 * PAD;
        let n = raw.len();
        let background = -MNIST_MEAN / MNIST_STD;
        let mut data = vec![background; n * side * side];
        for (i, out) in data.chunks_exact_mut(side * side).enumerate() {
            let image = raw.image(i);
            for r in 0..rows {
                for c in 0..cols {
                    let v = f32::from(image[r * cols + c]) / 255.0;
                    out[(r + PAD) * side + c + PAD] = (v - MNIST_MEAN) / MNIST_STD;
                }
            }
        }
        Self::new(
            Tensor4::from_vec([n, 1, side, side], data)?,
            raw.labels.clone(),
        )
    }

    pub fn load(dir: &Path, split: Split) -> Result<Self> {
        Self::from_raw(&load_split(dir, split)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.images.height()
    }

    pub fn images(&self) -> &Tensor4<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// The first `limit` items (all of them when `limit` exceeds the size).
    pub fn head(&self, limit: usize) -> Self {
        let n = limit.min(self.len());
        let indices: Vec<usize> = (0..n).collect();
        self.subset(&indices)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Same images with every label passed through `map`.
    pub fn relabel(&self, map: impl Fn(u8) -> u8) -> Result<Self> {
        Self::new(
            self.images.clone(),
            self.labels.iter().map(|&l| map(l)).collect(),
        )
    }

    /// A batch converted to the model's scalar type.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> (Tensor4<T>, Vec<usize>) {
        let images = self.images.gather(indices).map(|v| T::lit(f64::from(v)));
        (
            images,
            indices
                .iter()
                .map(|&i| usize::from(self.labels[i]))
                .collect(),
        )
    }
}

/// A random permutation of `0..len`.
pub fn shuffled_indices<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
}
