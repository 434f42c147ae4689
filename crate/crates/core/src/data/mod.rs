//! Datasets: MNIST in IDX format, stratified subsets and synthetic blobs.

mod idx;

pub use idx::{
    dataset_from_idx, dataset_to_idx, encode_idx, load_idx, load_mnist, normalize_pixels, parse_idx, to_pixel,
    IdxArray, MnistFiles, IMAGES_MAGIC, LABELS_MAGIC,
};

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, StreamKind};
use crate::scalar::Scalar;

/// Standard deviation of each blob before rescaling into `[-1, 1]`.
pub const BLOB_STD: f64 = 0.25;

/// Inputs (one row per sample, values in `[-1, 1]`) with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Array2<T>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Shape of one sample, e.g. `[28, 28]`; its product is `inputs.ncols()`.
    pub sample_shape: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Array2<T>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let d = inputs.ncols();
        Self::with_shape(inputs, labels, n_classes, vec![d])
    }

    pub fn with_shape(
        inputs: Array2<T>,
        labels: Vec<usize>,
        n_classes: usize,
        sample_shape: Vec<usize>,
    ) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::CountMismatch {
                images: inputs.nrows(),
                labels: labels.len(),
            });
        }
        if sample_shape.iter().product::<usize>() != inputs.ncols() {
            return Err(Error::Shape(format!(
                "sample shape {sample_shape:?} does not match {} columns",
                inputs.ncols()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(invalid(format!("label {l} out of range for {n_classes} classes")));
        }
        if let Some(v) = inputs.iter().find(|v| !(v.abs() <= T::one())) {
            return Err(invalid(format!("input value {v} outside [-1, 1]")));
        }
        Ok(Self {
            inputs,
            labels,
            n_classes,
            sample_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            sample_shape: self.sample_shape.clone(),
        }
    }
}

/// Stratified subset keeping `round(fraction · n_c)` samples of each class
/// `c`, in their original order.
pub fn subsample<T: Scalar>(ds: &Dataset<T>, fraction: f64, seed: u64) -> Result<Dataset<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if fraction == 1.0 {
        return Ok(ds.clone());
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut keep = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        let k = (fraction * members.len() as f64).round() as usize;
        let mut rng = stream(seed, c as u64, 0, StreamKind::Data);
        keep.extend(
            index::sample(&mut rng, members.len(), k)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    if keep.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "fraction {fraction} of {} samples",
            ds.len()
        )));
    }
    keep.sort_unstable();
    Ok(ds.select(&keep))
}

/// Two Gaussian blobs of standard deviation [`BLOB_STD`] centred at
/// `±margin·e₁`; even indices are class 0 (the `−` blob). Coordinates are
/// divided by `margin + 4·BLOB_STD` and clamped into `[-1, 1]`. Both maps
/// preserve the sign of the first coordinate, so the Bayes accuracy is
/// `Φ(margin / BLOB_STD)`.
pub fn make_blobs<T: Scalar>(n: usize, d: usize, margin: f64, seed: u64) -> Result<Dataset<T>> {
    if n < 2 || d == 0 {
        return Err(invalid(format!("make_blobs needs n >= 2 and d >= 1, got n={n}, d={d}")));
    }
    if !(margin > 0.0) {
        return Err(invalid(format!("margin must be > 0, got {margin}")));
    }
    let mut rng = stream(seed, 0, 0, StreamKind::Data);
    let scale = 1.0 / (margin + 4.0 * BLOB_STD);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let inputs = Array2::from_shape_fn((n, d), |(i, j)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        let centre = if j == 0 {
            if labels[i] == 1 {
                margin
            } else {
                -margin
            }
        } else {
            0.0
        };
        T::lit(((centre + BLOB_STD * z) * scale).clamp(-1.0, 1.0))
    });
    Dataset::new(inputs, labels, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(n: usize, classes: usize) -> Dataset<f64> {
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % classes).collect();
        let inputs = Array2::from_shape_fn((n, 2), |(i, j)| ((i + j) as f64 / n as f64).min(1.0));
        Dataset::new(inputs, labels, classes).unwrap()
    }

    #[test]
    fn full_fraction_is_identity() {
        let ds = labelled(100, 3);
        assert_eq!(subsample(&ds, 1.0, 4).unwrap(), ds);
    }

    #[test]
    fn subsample_is_stratified_ordered_and_deterministic() {
        let ds = labelled(1000, 10);
        let sub = subsample(&ds, 0.25, 9).unwrap();
        assert_eq!(sub, subsample(&ds, 0.25, 9).unwrap());
        for (full, part) in ds.class_counts().iter().zip(sub.class_counts()) {
            assert!((part as f64 - 0.25 * *full as f64).abs() <= 1.0);
        }
        // original order: inputs are increasing in the row index
        assert!(sub.inputs.column(0).windows(2).into_iter().all(|w| w[0] < w[1]));
    }

    #[test]
    fn subsample_rejects_bad_fraction_and_empty_result() {
        let ds = labelled(10, 2);
        assert!(subsample(&ds, 0.0, 1).is_err());
        assert!(subsample(&ds, 1.5, 1).is_err());
        assert!(matches!(subsample(&ds, 0.01, 1), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn blobs_two_points() {
        let ds = make_blobs::<f64>(2, 3, 1.0, 5).unwrap();
        assert_eq!(ds.class_counts(), vec![1, 1]);
        assert!(ds.inputs.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn blob_bayes_accuracy_matches_gaussian_cdf() {
        // Φ via the complementary error function, independent of the generator.
        let phi = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
        let n = 40_000;
        for &margin in &[0.1, 0.25, 0.5] {
            let ds = make_blobs::<f64>(n, 1, margin, 17).unwrap();
            let correct = ds
                .labels
                .iter()
                .zip(ds.inputs.column(0))
                .filter(|(&l, &x)| (x > 0.0) == (l == 1))
                .count();
            let acc = correct as f64 / n as f64;
            let p = phi(margin / BLOB_STD);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((acc - p).abs() < 5.0 * se, "margin {margin}: {acc} vs {p}");
        }
    }

    #[test]
    fn dataset_invariants_are_checked() {
        let x = Array2::from_elem((2, 2), 0.5);
        assert!(Dataset::new(x.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(x.clone(), vec![0], 2).is_err());
        assert!(Dataset::new(Array2::from_elem((1, 1), 1.5), vec![0], 2).is_err());
        assert!(Dataset::with_shape(x, vec![0, 1], 2, vec![3]).is_err());
    }
}
