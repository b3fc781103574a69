//! CIFAR-10 binary-batch parsing.
//!
//! Each record is 3073 bytes: one label byte (0..=9) followed by 3072 pixel
//! bytes in channel-major order (1024 R, 1024 G, 1024 B). A file must be an
//! exact multiple of the record size.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const RECORD_BYTES: usize = 3073;
const FEATURES: usize = 3072;

pub const TRAIN_BATCHES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_BATCH: &str = "test_batch.bin";

/// Load the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for name in TRAIN_BATCHES {
        parse_batch(&dir.join(name), &mut pixels, &mut labels)?;
    }
    let train = build("cifar10-train", pixels, labels)?;

    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    parse_batch(&dir.join(TEST_BATCH), &mut pixels, &mut labels)?;
    let test = build("cifar10-test", pixels, labels)?;
    Ok((train, test))
}

fn build(name: &str, pixels: Vec<f64>, labels: Vec<usize>) -> Result<Dataset> {
    let x = Matrix::new(labels.len(), FEATURES, pixels)?;
    Dataset::from_labels(name, x, labels, 10)
}

/// Append one batch file's records to the pixel/label accumulators.
fn parse_batch(path: &Path, pixels: &mut Vec<f64>, labels: &mut Vec<usize>) -> Result<()> {
    let file = path.display().to_string();
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::format(
            &file,
            (bytes.len() - bytes.len() % RECORD_BYTES) as u64,
            format!(
                "file length {} is not a positive multiple of the {RECORD_BYTES}-byte record size",
                bytes.len()
            ),
        ));
    }
    for (i, record) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let label = record[0];
        if label > 9 {
            return Err(Error::format(
                &file,
                (i * RECORD_BYTES) as u64,
                format!("label byte {label} exceeds 9"),
            ));
        }
        labels.push(label as usize);
        pixels.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::RECORD_BYTES;

    /// Serialize synthetic CIFAR-10 records.
    pub fn cifar_bytes(records: &[(u8, u8)]) -> Vec<u8> {
        // (label, fill byte) per record.
        let mut out = Vec::with_capacity(records.len() * RECORD_BYTES);
        for &(label, fill) in records {
            out.push(label);
            out.extend(std::iter::repeat_n(fill, RECORD_BYTES - 1));
        }
        out
    }
}
