//! Cut a reproducible MNIST subset out of the standard IDX files.
//!
//! ```text
//! cargo run --example prepare_mnist -- <mnist-dir> <out-dir> [train-count] [test-count]
//! ```
//!
//! `<mnist-dir>` must hold the four uncompressed files
//! (`train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
//! `t10k-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`). The subset is a
//! seeded uniform sample kept in source order, written as
//! `train-images.idx`, `train-labels.idx`, `test-images.idx` and
//! `test-labels.idx`.

use std::path::{Path, PathBuf};

use fedtsv::data::{read_idx, IdxPair};
use fedtsv::rng::seeded_rng;
use rand::seq::index::sample;

const SUBSET_SEED: u64 = 20_250_101;

fn subset(pair: &IdxPair, count: usize, seed: u64) -> IdxPair {
    let count = count.min(pair.len());
    let mut idx = sample(&mut seeded_rng(seed), pair.len(), count).into_vec();
    idx.sort_unstable();
    pair.select(&idx)
}

fn histogram(labels: &[u8]) -> Vec<usize> {
    let mut h = vec![0; 10];
    for &l in labels {
        h[l as usize] += 1;
    }
    h
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        eprintln!("usage: prepare_mnist <mnist-dir> <out-dir> [train-count] [test-count]");
        std::process::exit(2);
    }
    let src = Path::new(&args[0]);
    let out = PathBuf::from(&args[1]);
    let train_count: usize = args.get(2).map_or(Ok(10_000), |s| s.parse())?;
    let test_count: usize = args.get(3).map_or(Ok(10_000), |s| s.parse())?;

    let train = read_idx(src.join("train-images-idx3-ubyte"), src.join("train-labels-idx1-ubyte"))?;
    let test = read_idx(src.join("t10k-images-idx3-ubyte"), src.join("t10k-labels-idx1-ubyte"))?;
    println!("source: {} training and {} test images", train.len(), test.len());

    let train = subset(&train, train_count, SUBSET_SEED);
    let test = subset(&test, test_count, SUBSET_SEED + 1);
    std::fs::create_dir_all(&out)?;
    train.write(out.join("train-images.idx"), out.join("train-labels.idx"))?;
    test.write(out.join("test-images.idx"), out.join("test-labels.idx"))?;

    println!("train subset: {} images, per-class {:?}", train.len(), histogram(&train.labels));
    println!("test subset:  {} images, per-class {:?}", test.len(), histogram(&test.labels));
    println!("written to {}", out.display());
    Ok(())
}
