//! Dataset containers and the split/pad/stratify operations every other
//! module consumes. Loading and saving live in the companion CLI crate.

use alloc::string::String;
use alloc::vec::Vec;
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Labeled tabular data: `n_rows x n_features` row-major features and a
/// dense class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub features: Vec<f64>,
    pub n_features: usize,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub feature_names: Option<Vec<String>>,
}

impl TabularDataset {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Structural checks: finite features, labels within `n_classes`.
    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.n_rows() * self.n_features {
            return Err(Error::InvalidConfig(
                "feature buffer does not match rows x features".into(),
            ));
        }
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "non-finite feature value at row {}, column {}",
                pos / self.n_features.max(1),
                pos % self.n_features.max(1)
            )));
        }
        if self.labels.iter().any(|&l| l >= self.n_classes) {
            return Err(Error::InvalidConfig("label outside n_classes".into()));
        }
        Ok(())
    }
}

/// Labeled image data: `n x h x w x c` row-major pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub pixels: Vec<f64>,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl ImageDataset {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let stride = self.h * self.w * self.c;
        &self.pixels[i * stride..(i + 1) * stride]
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels.len() != self.n_rows() * self.h * self.w * self.c {
            return Err(Error::InvalidConfig(
                "pixel buffer does not match n x h x w x c".into(),
            ));
        }
        if self.pixels.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidConfig("pixel outside [0, 1]".into()));
        }
        if self.labels.iter().any(|&l| l >= self.n_classes) {
            return Err(Error::InvalidConfig("label outside n_classes".into()));
        }
        Ok(())
    }
}

/// A disjoint train/test pair produced by [`split`].
#[derive(Debug, Clone)]
pub struct SplitPair<D> {
    pub train: D,
    pub test: D,
    /// Fraction of rows on the training side.
    pub ratio: f64,
}

/// Row-indexed view shared by the dataset kinds.
pub trait Dataset: Sized {
    fn n_rows(&self) -> usize;
    fn labels(&self) -> &[usize];
    fn n_classes(&self) -> usize;
    /// New dataset holding the given rows, in the given order.
    fn select(&self, rows: &[usize]) -> Self;
}

impl Dataset for TabularDataset {
    fn n_rows(&self) -> usize {
        self.labels.len()
    }

    fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn select(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.n_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Self {
            features,
            n_features: self.n_features,
            labels,
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
        }
    }
}

impl Dataset for ImageDataset {
    fn n_rows(&self) -> usize {
        self.labels.len()
    }

    fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn select(&self, rows: &[usize]) -> Self {
        let stride = self.h * self.w * self.c;
        let mut pixels = Vec::with_capacity(rows.len() * stride);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            pixels.extend_from_slice(self.image(r));
            labels.push(self.labels[r]);
        }
        Self {
            pixels,
            h: self.h,
            w: self.w,
            c: self.c,
            labels,
            n_classes: self.n_classes,
        }
    }
}

/// Widen a tabular dataset to `target_n_features` by appending all-zero
/// columns; existing values and labels are untouched.
pub fn zero_pad_features(d: &TabularDataset, target_n_features: usize) -> Result<TabularDataset> {
    if target_n_features < d.n_features {
        return Err(Error::PadTooNarrow {
            current: d.n_features,
            target: target_n_features,
        });
    }
    if target_n_features == d.n_features {
        return Ok(d.clone());
    }
    let mut features = Vec::with_capacity(d.n_rows() * target_n_features);
    for i in 0..d.n_rows() {
        features.extend_from_slice(d.row(i));
        features.extend(core::iter::repeat(0.0).take(target_n_features - d.n_features));
    }
    let feature_names = d.feature_names.as_ref().map(|names| {
        let mut names = names.clone();
        for i in d.n_features..target_n_features {
            names.push(alloc::format!("pad{i}"));
        }
        names
    });
    Ok(TabularDataset {
        features,
        n_features: target_n_features,
        labels: d.labels.clone(),
        n_classes: d.n_classes,
        feature_names,
    })
}

/// Shuffle rows with the seed and cut them into a disjoint, exhaustive
/// train/test pair; `train_fraction` rounds to the nearest row count.
pub fn split<D: Dataset>(d: &D, train_fraction: f64, seed: u64) -> Result<SplitPair<D>> {
    if d.n_rows() < 10 {
        return Err(Error::TooFewRows {
            rows: d.n_rows(),
            min: 10,
        });
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = d.n_rows();
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (train_rows, test_rows) = order.split_at(n_train);
    Ok(SplitPair {
        train: d.select(train_rows),
        test: d.select(test_rows),
        ratio: train_fraction,
    })
}

/// Draw exactly `per_class` rows per class, uniformly without replacement.
pub fn stratified_sample<D: Dataset>(d: &D, per_class: usize, seed: u64) -> Result<D> {
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); d.n_classes()];
    for (row, &label) in d.labels().iter().enumerate() {
        by_class[label].push(row);
    }
    let mut rng = seed::rng(seed);
    let mut picked = Vec::with_capacity(per_class * d.n_classes());
    for (class, rows) in by_class.iter_mut().enumerate() {
        if rows.len() < per_class {
            return Err(Error::ClassTooSmall {
                class,
                available: rows.len(),
                required: per_class,
            });
        }
        rows.partial_shuffle(&mut rng, per_class);
        let mut chosen: Vec<usize> = rows[..per_class].to_vec();
        chosen.sort_unstable();
        picked.extend(chosen);
    }
    Ok(d.select(&picked))
}

/// Synthetic tabular data for tests and demos.
pub mod synth {
    use super::*;

    /// Two Gaussian blobs (one per class) whose centers sit `separation`
    /// apart along every axis, `n_per_class` rows each.
    pub fn gaussian_blobs(
        n_per_class: usize,
        n_features: usize,
        separation: f64,
        seed: u64,
    ) -> TabularDataset {
        let mut rng = seed::rng(seed);
        let mut gauss = move || {
            // Box-Muller transform.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen::<f64>();
            (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
        };
        let mut features = Vec::with_capacity(2 * n_per_class * n_features);
        let mut labels = Vec::with_capacity(2 * n_per_class);
        for class in 0..2usize {
            let center = class as f64 * separation;
            for _ in 0..n_per_class {
                for _ in 0..n_features {
                    features.push(center + gauss());
                }
                labels.push(class);
            }
        }
        TabularDataset {
            features,
            n_features,
            labels,
            n_classes: 2,
            feature_names: None,
        }
    }

    /// Flip each label to a uniformly random other class with probability
    /// `rate`.
    pub fn with_label_noise(d: &TabularDataset, rate: f64, seed: u64) -> TabularDataset {
        let mut rng = seed::rng(seed);
        let mut out = d.clone();
        if d.n_classes < 2 {
            return out;
        }
        for label in &mut out.labels {
            if rng.gen::<f64>() < rate {
                let shift = rng.gen_range(1..d.n_classes);
                *label = (*label + shift) % d.n_classes;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy(n: usize) -> TabularDataset {
        TabularDataset {
            features: (0..n * 2).map(|i| i as f64).collect(),
            n_features: 2,
            labels: (0..n).map(|i| i % 3).collect(),
            n_classes: 3,
            feature_names: None,
        }
    }

    #[test]
    fn pad_appends_zero_columns_only() {
        let d = toy(3);
        let p = zero_pad_features(&d, 5).unwrap();
        assert_eq!(p.n_features, 5);
        for i in 0..3 {
            assert_eq!(&p.row(i)[..2], d.row(i));
            assert!(p.row(i)[2..].iter().all(|&v| v == 0.0));
        }
        assert_eq!(p.labels, d.labels);
    }

    #[test]
    fn pad_to_same_width_is_identity() {
        let d = toy(3);
        assert_eq!(zero_pad_features(&d, 2).unwrap(), d);
    }

    #[test]
    fn pad_narrower_is_rejected() {
        assert!(matches!(
            zero_pad_features(&toy(3), 1),
            Err(Error::PadTooNarrow {
                current: 2,
                target: 1
            })
        ));
    }

    #[test]
    fn pad_preserves_column_statistics() {
        let d = synth::gaussian_blobs(20, 3, 1.0, 5);
        let p = zero_pad_features(&d, 6).unwrap();
        for col in 0..3 {
            let stats = |d: &TabularDataset, col: usize| {
                let vals: Vec<f64> = (0..d.n_rows()).map(|r| d.row(r)[col]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
                (mean, var)
            };
            assert_eq!(stats(&d, col), stats(&p, col));
        }
    }

    #[test]
    fn split_90_10_counts() {
        let d = toy(100);
        let s = split(&d, 0.9, 1).unwrap();
        assert_eq!(s.train.n_rows(), 90);
        assert_eq!(s.test.n_rows(), 10);
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let d = toy(37);
        let a = split(&d, 0.9, 9).unwrap();
        let b = split(&d, 0.9, 9).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);

        // Rows carry unique feature values, so multisets can be compared.
        let mut seen: Vec<f64> = a
            .train
            .features
            .iter()
            .chain(&a.test.features)
            .copied()
            .collect();
        seen.sort_by(f64::total_cmp);
        let mut all = d.features.clone();
        all.sort_by(f64::total_cmp);
        assert_eq!(seen, all);
    }

    #[test]
    fn split_rejects_tiny_datasets() {
        assert!(matches!(
            split(&toy(9), 0.9, 0),
            Err(Error::TooFewRows { rows: 9, min: 10 })
        ));
    }

    #[test]
    fn stratified_sample_is_uniform_per_class() {
        let d = toy(300);
        let s = stratified_sample(&d, 11, 3).unwrap();
        assert_eq!(s.n_rows(), 33);
        let mut counts = [0usize; 3];
        for &l in &s.labels {
            counts[l] += 1;
        }
        assert_eq!(counts, [11, 11, 11]);
    }

    #[test]
    fn stratified_sample_zero_gives_empty() {
        let s = stratified_sample(&toy(30), 0, 3).unwrap();
        assert_eq!(s.n_rows(), 0);
    }

    #[test]
    fn stratified_sample_names_small_class() {
        let mut d = toy(30);
        d.labels = (0..30).map(|i| usize::from(i == 0)).collect();
        d.n_classes = 2;
        match stratified_sample(&d, 2, 0) {
            Err(Error::ClassTooSmall { class, available, required }) => {
                assert_eq!((class, available, required), (1, 1, 2));
            }
            other => panic!("expected ClassTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn blobs_are_labeled_and_finite() {
        let d = synth::gaussian_blobs(50, 4, 3.0, 7);
        assert_eq!(d.n_rows(), 100);
        d.validate().unwrap();
    }

    #[test]
    fn label_noise_flips_roughly_the_requested_share() {
        let d = synth::gaussian_blobs(500, 2, 3.0, 7);
        let noisy = synth::with_label_noise(&d, 0.3, 11);
        let flips = d
            .labels
            .iter()
            .zip(&noisy.labels)
            .filter(|(a, b)| a != b)
            .count();
        assert!((200..400).contains(&flips), "flips = {flips}");
    }
}
