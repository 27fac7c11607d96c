//! Datasets, ingestion and federated partitioning.

mod csv;
mod idx;
mod partition;
mod synth;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub use self::csv::load_csv;
pub use idx::{load_idx, read_idx, write_idx_images, write_idx_labels, IdxPair};
pub use partition::{partition, ClientDataset, Partition, PartitionSpec, Profile};
pub use synth::synth_blobs;

/// Client identifier; clients are numbered `0..n_clients`.
pub type ClientId = usize;

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::structural("dataset must hold at least one sample"));
        }
        if dim == 0 || num_classes == 0 {
            return Err(Error::structural("dataset dim and num_classes must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::structural(format!(
                "feature matrix has {} entries, expected {} x {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::structural(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::structural("feature rows must be finite"));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Copy of the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::structural(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, self.dim, labels, self.num_classes)
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    pub(crate) fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.features.clone(), self.dim, labels, self.num_classes)
    }
}

/// Uniformly hold out `round(fraction * n)` rows. Returns `(rest, held_out)`.
pub fn holdout_split(data: &LabeledDataset, fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::structural(format!(
            "holdout fraction {fraction} must lie in (0, 1)"
        )));
    }
    let n = data.len();
    let held = ((fraction * n as f64).round() as usize).max(1);
    if held >= n {
        return Err(Error::structural("holdout split leaves no samples"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Split, &[]));
    let (h, r) = idx.split_at(held);
    let mut h = h.to_vec();
    let mut r = r.to_vec();
    h.sort_unstable();
    r.sort_unstable();
    Ok((data.subset(&r)?, data.subset(&h)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_labels_and_shapes() {
        assert!(LabeledDataset::new(vec![0.0; 4], 2, vec![0, 2], 2).is_err());
        assert!(LabeledDataset::new(vec![0.0; 3], 2, vec![0, 1], 2).is_err());
        assert!(LabeledDataset::new(vec![], 2, vec![], 2).is_err());
        assert!(LabeledDataset::new(vec![f64::NAN, 0.0], 2, vec![0], 2).is_err());
    }

    #[test]
    fn holdout_conserves_rows() {
        let d = synth_blobs(3, 20, 2, 5.0, 1);
        let (rest, held) = holdout_split(&d, 0.25, 9).unwrap();
        assert_eq!(held.len(), 15);
        assert_eq!(rest.len() + held.len(), d.len());
        let mut all: Vec<(Vec<u64>, usize)> = rest
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &l)| (rest.row(i).iter().map(|v| v.to_bits()).collect(), l))
            .chain(
                held.labels()
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| (held.row(i).iter().map(|v| v.to_bits()).collect(), l)),
            )
            .collect();
        let mut orig: Vec<(Vec<u64>, usize)> = (0..d.len())
            .map(|i| (d.row(i).iter().map(|v| v.to_bits()).collect(), d.label(i)))
            .collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
    }
}
