use std::path::Path;

use ndarray::Array2;

use super::{io_err, DataError, NumericDataset};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(DataError::Truncated("IDX header"))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), DataError> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(DataError::BadMagic { found, expected });
    }
    Ok(())
}

/// Loads an MNIST-style image/label pair. Pixels are scaled to `[0, 1]`.
pub fn load_idx(path_images: &Path, path_labels: &Path) -> Result<NumericDataset, DataError> {
    let images = std::fs::read(path_images).map_err(io_err(path_images))?;
    let labels = std::fs::read(path_labels).map_err(io_err(path_labels))?;
    load_idx_bytes(&images, &labels)
}

pub fn load_idx_bytes(images: &[u8], labels: &[u8]) -> Result<NumericDataset, DataError> {
    check_magic(images, IMAGES_MAGIC)?;
    check_magic(labels, LABELS_MAGIC)?;
    let n_images = read_u32(images, 4)? as usize;
    let rows = read_u32(images, 8)? as usize;
    let cols = read_u32(images, 12)? as usize;
    let n_labels = read_u32(labels, 4)? as usize;
    if n_images != n_labels {
        return Err(DataError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let pixels = images
        .get(16..16 + n_images * rows * cols)
        .ok_or(DataError::Truncated("IDX image data"))?;
    let label_bytes = labels
        .get(8..8 + n_labels)
        .ok_or(DataError::Truncated("IDX label data"))?;
    let features = Array2::from_shape_vec(
        (n_images, rows * cols),
        pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )
    .expect("shape matches pixel count");
    Ok(NumericDataset::new(
        features,
        label_bytes.iter().map(|&l| l as i32).collect(),
    ))
}

/// Serializes images (row-major bytes) in the IDX container.
pub fn encode_idx_images(pixels: &[u8], n: usize, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
