//! IDX files as distributed with MNIST-style datasets: a big-endian `u32`
//! magic number, big-endian `u32` dimension sizes, then unsigned bytes.

use std::fs;
use std::path::Path;

use super::dataset::{LabeledInstance, NoisyDataset, Provenance};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxFile {
    dims: Vec<usize>,
    data: Vec<u8>,
}

fn read_idx(path: &Path, magic: u32) -> Result<IdxFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = |detail: String| Error::Truncated {
        path: path.to_path_buf(),
        detail,
    };
    let word = |k: usize| -> Result<u32> {
        bytes
            .get(4 * k..4 * k + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| truncated(format!("header word {k} missing")))
    };
    let found = word(0)?;
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
            expected: magic,
        });
    }
    let rank = (magic & 0xff) as usize;
    let dims = (1..=rank)
        .map(|k| word(k).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 * (rank + 1);
    let expected: usize = dims.iter().product();
    let available = bytes.len() - header;
    if available < expected {
        return Err(truncated(format!("{available} data bytes, expected {expected}")));
    }
    Ok(IdxFile {
        dims,
        data: bytes[header..header + expected].to_vec(),
    })
}

/// Loads an image/label file pair as a clean dataset with pixel values
/// scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<NoisyDataset> {
    let images = read_idx(images_path, IMAGES_MAGIC)?;
    let labels = read_idx(labels_path, LABELS_MAGIC)?;
    let count = images.dims[0];
    if count != labels.dims[0] {
        return Err(Error::CountMismatch {
            images: images_path.to_path_buf(),
            labels: labels_path.to_path_buf(),
            image_count: count,
            label_count: labels.dims[0],
        });
    }
    let pixels = images.dims[1] * images.dims[2];
    if count == 0 || pixels == 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: no image data",
            images_path.display()
        )));
    }
    let classes = labels.data.iter().map(|&y| y as usize + 1).max().unwrap_or(0).max(2);
    let instances = labels
        .data
        .iter()
        .enumerate()
        .map(|(i, &y)| LabeledInstance {
            id: i,
            features: images.data[i * pixels..(i + 1) * pixels]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect(),
            noisy_label: y as usize,
            true_label: y as usize,
        })
        .collect();
    NoisyDataset::new(
        instances,
        classes,
        Provenance {
            generator: format!("idx({})", images_path.display()),
            seed: 0,
            noise: "none".into(),
        },
    )
}
