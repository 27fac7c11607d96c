use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::LabeledDataset;
use crate::params::squared_distance;
use crate::rng::{stream_rng, Stream};

/// Isotropic unit-variance Gaussian clusters, one per class.
///
/// Class means are random directions rescaled so the closest pair sits at
/// exactly `separation`. Rows are shuffled.
///
/// # Panics
/// If any argument is zero or `separation` is not positive.
pub fn synth_blobs(num_classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> LabeledDataset {
    assert!(num_classes > 0 && per_class > 0 && dim > 0, "synth_blobs sizes must be positive");
    assert!(separation > 0.0, "synth_blobs separation must be positive");
    let mut rng = stream_rng(seed, Stream::Synthetic, &[]);

    let mut means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    if num_classes > 1 {
        let mut min_d2 = f64::INFINITY;
        for a in 0..num_classes {
            for b in a + 1..num_classes {
                min_d2 = min_d2.min(squared_distance(&means[a], &means[b]));
            }
        }
        let factor = separation / min_d2.sqrt();
        for m in &mut means {
            for v in m.iter_mut() {
                *v *= factor;
            }
        }
    } else {
        means[0].iter_mut().for_each(|v| *v = 0.0);
    }

    let n = num_classes * per_class;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for slot in order {
        let class = slot / per_class;
        for &mu in &means[class] {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(mu + z);
        }
        labels.push(class);
    }
    LabeledDataset::new(features, dim, labels, num_classes).expect("synthetic dataset is well-formed")
}
