//! IDX (MNIST) file reader and writer.
//!
//! Big-endian header: magic `0x00000803` for `u8` image tensors of shape
//! `count x rows x cols`, `0x00000801` for `u8` label vectors.

use std::fs;
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn ingestion(path: &Path, field: &str, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        field: field.to_string(),
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path, field: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| ingestion(path, field, "file truncated inside header"))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Raw contents of an image/label IDX pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxPair {
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl IdxPair {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The images at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> IdxPair {
        let dim = self.rows * self.cols;
        IdxPair {
            rows: self.rows,
            cols: self.cols,
            pixels: indices
                .iter()
                .flat_map(|&i| self.pixels[i * dim..(i + 1) * dim].iter().copied())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn write(&self, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
        write_idx_images(images_path, self.rows, self.cols, &self.pixels)?;
        write_idx_labels(labels_path, &self.labels)
    }

    /// Scale pixels to `[0, 1]`; classes are `0..=max label`.
    pub fn to_dataset(&self) -> Result<LabeledDataset> {
        let features: Vec<f64> = self.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
        let labels: Vec<usize> = self.labels.iter().map(|&b| usize::from(b)).collect();
        let num_classes = labels.iter().max().map_or(1, |m| m + 1);
        LabeledDataset::new(features, self.rows * self.cols, labels, num_classes)
    }
}

/// Load an image/label IDX pair, scaling pixels to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_idx(images_path, labels_path)?.to_dataset()
}

/// Read and validate an image/label IDX pair without converting it.
pub fn read_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<IdxPair> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let img = read_file(images_path)?;
    let lab = read_file(labels_path)?;

    let magic = read_u32(&img, 0, images_path, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(ingestion(
            images_path,
            "magic",
            format!("expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = read_u32(&img, 4, images_path, "count")? as usize;
    let rows = read_u32(&img, 8, images_path, "rows")? as usize;
    let cols = read_u32(&img, 12, images_path, "cols")? as usize;
    let dim = rows * cols;
    if count == 0 || dim == 0 {
        return Err(ingestion(images_path, "count", "empty image tensor"));
    }
    let pixels = &img[16..];
    if pixels.len() < count * dim {
        return Err(ingestion(
            images_path,
            "pixels",
            format!(
                "truncated: header promises {} bytes, file holds {}",
                count * dim,
                pixels.len()
            ),
        ));
    }

    let magic = read_u32(&lab, 0, labels_path, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(ingestion(
            labels_path,
            "magic",
            format!("expected {LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let label_count = read_u32(&lab, 4, labels_path, "count")? as usize;
    if label_count != count {
        return Err(ingestion(
            labels_path,
            "count",
            format!("{label_count} labels for {count} images"),
        ));
    }
    let raw_labels = &lab[8..];
    if raw_labels.len() < count {
        return Err(ingestion(
            labels_path,
            "labels",
            format!("truncated: expected {count} bytes, found {}", raw_labels.len()),
        ));
    }

    Ok(IdxPair {
        rows,
        cols,
        pixels: pixels[..count * dim].to_vec(),
        labels: raw_labels[..count].to_vec(),
    })
}

pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dim = rows * cols;
    if dim == 0 || !pixels.len().is_multiple_of(dim) {
        return Err(Error::structural("pixel buffer is not a whole number of images"));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&((pixels.len() / dim) as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("img.idx");
        let lab = dir.join("lab.idx");
        // two 2x3 images
        let pixels: Vec<u8> = vec![0, 255, 17, 128, 3, 200, 9, 8, 7, 6, 5, 254];
        write_idx_images(&img, 2, 3, &pixels).unwrap();
        write_idx_labels(&lab, &[4, 1]).unwrap();
        (img, lab)
    }

    #[test]
    fn reads_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path());
        let d = load_idx(&img, &lab).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 6);
        assert_eq!(d.labels(), &[4, 1]);
        assert_eq!(d.num_classes(), 5);
        let expected: Vec<f64> = [0u8, 255, 17, 128, 3, 200, 9, 8, 7, 6, 5, 254]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        assert_eq!(d.features(), expected.as_slice());
    }

    fn field_of(err: Error) -> String {
        match err {
            Error::Ingestion { field, .. } => field,
            other => panic!("expected ingestion error, got {other}"),
        }
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path());
        write_idx_labels(&lab, &[4, 1, 2]).unwrap();
        assert_eq!(field_of(load_idx(&img, &lab).unwrap_err()), "count");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path());
        assert_eq!(field_of(load_idx(&lab, &img).unwrap_err()), "magic");
    }

    #[test]
    fn truncation_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path());
        let mut bytes = fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 1);
        fs::write(&img, &bytes).unwrap();
        assert_eq!(field_of(load_idx(&img, &lab).unwrap_err()), "pixels");
        fs::write(&img, &bytes[..14]).unwrap();
        assert_eq!(field_of(load_idx(&img, &lab).unwrap_err()), "cols");
    }
}
