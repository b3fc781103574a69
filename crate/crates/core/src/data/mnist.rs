//! MNIST IDX binary parsing.
//!
//! The IDX image format is big-endian: magic 0x00000803, then sample count,
//! row count, and column count as u32, then one unsigned byte per pixel.
//! Label files use magic 0x00000801 and a single count. Pixels are scaled
//! by 1/255 into [0, 1]; labels become one-hot +/-1 target rows.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Load the four standard IDX files from `dir` into train/test datasets.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_pair(
        &dir.join(TRAIN_IMAGES),
        &dir.join(TRAIN_LABELS),
        "mnist-train",
    )?;
    let test = load_pair(&dir.join(TEST_IMAGES), &dir.join(TEST_LABELS), "mnist-test")?;
    Ok((train, test))
}

fn load_pair(images: &Path, labels: &Path, name: &str) -> Result<Dataset> {
    let (pixels, count, features) = parse_idx_images(images)?;
    let label_bytes = parse_idx_labels(labels)?;
    if label_bytes.len() != count {
        return Err(Error::format(
            labels.display().to_string(),
            4,
            format!(
                "label count {} does not match image count {}",
                label_bytes.len(),
                count
            ),
        ));
    }
    let x = Matrix::new(
        count,
        features,
        pixels.iter().map(|&b| b as f64 / 255.0).collect(),
    )?;
    let class_labels = label_bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b > 9 {
                Err(Error::format(
                    labels.display().to_string(),
                    8 + i as u64,
                    format!("label byte {b} exceeds 9"),
                ))
            } else {
                Ok(b as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_labels(name, x, class_labels, 10)
}

/// Parse an IDX image file into raw bytes plus (count, rows*cols).
pub fn parse_idx_images(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let file = path.display().to_string();
    let bytes = std::fs::read(path)?;
    let magic = read_u32_be(&bytes, 0, &file)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            &file,
            0,
            format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(&bytes, 4, &file)? as usize;
    let rows = read_u32_be(&bytes, 8, &file)? as usize;
    let cols = read_u32_be(&bytes, 12, &file)? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::format(&file, 4, "zero count or image dims"));
    }
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::format(
            &file,
            bytes.len() as u64,
            format!(
                "truncated payload: {} bytes, header implies {expected}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            &file,
            expected as u64,
            format!("{} trailing bytes after payload", bytes.len() - expected),
        ));
    }
    Ok((bytes[16..].to_vec(), count, rows * cols))
}

/// Parse an IDX label file into raw label bytes.
pub fn parse_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let file = path.display().to_string();
    let bytes = std::fs::read(path)?;
    let magic = read_u32_be(&bytes, 0, &file)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            &file,
            0,
            format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(&bytes, 4, &file)? as usize;
    if count == 0 {
        return Err(Error::format(&file, 4, "zero label count"));
    }
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::format(
            &file,
            bytes.len() as u64,
            format!(
                "truncated payload: {} bytes, header implies {expected}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            &file,
            expected as u64,
            format!("{} trailing bytes after payload", bytes.len() - expected),
        ));
    }
    Ok(bytes[8..].to_vec())
}

fn read_u32_be(bytes: &[u8], at: usize, file: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(file, at as u64, "unexpected end of file in header"))
}
