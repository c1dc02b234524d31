//! Reader for the big-endian IDX containers MNIST ships in.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Raw 8-bit images with their labels, exactly as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMnist {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawMnist {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[index * n..(index + 1) * n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn file_names(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => (TRAIN_IMAGES, TRAIN_LABELS),
            Split::Test => (TEST_IMAGES, TEST_LABELS),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX3 image container into `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    if bytes.len() < 16 {
        return Err(Error::format(path, "truncated image header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            path,
            format!("bad image magic {magic:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(path, "image dimensions overflow"))?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "truncated image payload: expected {expected} bytes, found {}",
                payload.len()
            ),
        ));
    }
    Ok((count, rows, cols, payload.to_vec()))
}

/// Parses an IDX1 label container.
pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(Error::format(path, "truncated label header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            path,
            format!("bad label magic {magic:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4) as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::format(
            path,
            format!(
                "truncated label payload: expected {count} bytes, found {}",
                payload.len()
            ),
        ));
    }
    Ok(payload.to_vec())
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<RawMnist> {
    let (count, rows, cols, pixels) = parse_images(&read(images)?, images)?;
    let labels_vec = parse_labels(&read(labels)?, labels)?;
    if labels_vec.len() != count {
        return Err(Error::format(
            labels,
            format!(
                "count mismatch: {count} images but {} labels",
                labels_vec.len()
            ),
        ));
    }
    Ok(RawMnist {
        rows,
        cols,
        pixels,
        labels: labels_vec,
    })
}

pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let (images, labels) = split.file_names();
    (dir.join(images), dir.join(labels))
}

pub fn load_split(dir: &Path, split: Split) -> Result<RawMnist> {
    let (images, labels) = split_paths(dir, split);
    load_idx(&images, &labels)
}
