//! Stratified train/test partitioning.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::param(
                "train_fraction",
                format!("{} is outside (0, 1)", self.train_fraction),
            ));
        }
        Ok(())
    }

    /// Number of training rows for a class of `count` rows: the ceiling of
    /// `fraction * count`, clamped so each side keeps at least one row.
    pub fn train_count(&self, count: usize) -> usize {
        let raw = (self.train_fraction * count as f64 - 1e-9).ceil() as usize;
        raw.clamp(1, count.saturating_sub(1).max(1))
    }
}

/// Row indices of the train and test partitions, each in ascending order.
pub fn stratified_indices(ds: &LabeledDataset, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let counts = ds.class_counts();
    let thin: Vec<String> = counts
        .iter()
        .filter(|(_, &n)| n < 2)
        .map(|(l, _)| l.canonical())
        .collect();
    if !thin.is_empty() {
        return Err(Error::Stratification { classes: thin });
    }

    let mut rng = seed::rng(spec.seed);
    let mut train = Vec::with_capacity(ds.rows());
    let mut test = Vec::new();
    for (&label, &count) in &counts {
        let mut rows: Vec<usize> = (0..ds.rows()).filter(|&r| ds.labels()[r] == label).collect();
        rows.shuffle(&mut rng);
        let k = spec.train_count(count);
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(ds: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = stratified_indices(ds, spec)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MixtureLabel;
    use crate::matrix::Matrix;
    use proptest::prelude::*;

    fn toy(labels: &[u8]) -> LabeledDataset {
        let rows = labels.len();
        let feats = Matrix::from_vec(rows, 1, (0..rows).map(|i| i as f64).collect()).unwrap();
        let labels = labels.iter().map(|&b| MixtureLabel::from_bits(b).unwrap()).collect();
        LabeledDataset::new(vec!["s1".into()], feats, labels, None).unwrap()
    }

    #[test]
    fn exact_divisibility() {
        let ds = toy(&[1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
        let (tr, te) = stratified_split(&ds, &SplitSpec { train_fraction: 0.8, seed: 3 }).unwrap();
        assert_eq!((tr.rows(), te.rows()), (8, 2));
        assert_eq!(tr.class_counts().values().copied().collect::<Vec<_>>(), [4, 4]);
        assert_eq!(te.class_counts().values().copied().collect::<Vec<_>>(), [1, 1]);
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = toy(&[1, 1, 1, 2, 2, 2, 2, 4, 4]);
        let spec = SplitSpec { train_fraction: 0.7, seed: 11 };
        assert_eq!(stratified_indices(&ds, &spec).unwrap(), stratified_indices(&ds, &spec).unwrap());
    }

    #[test]
    fn singleton_class_is_reported() {
        let ds = toy(&[1, 1, 2, 4, 4]);
        match stratified_split(&ds, &SplitSpec::default()) {
            Err(Error::Stratification { classes }) => assert_eq!(classes, ["T"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_fraction() {
        let ds = toy(&[1, 1]);
        for f in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(stratified_split(&ds, &SplitSpec { train_fraction: f, seed: 0 }).is_err());
        }
    }

    #[test]
    fn two_row_class_keeps_one_each_side() {
        let ds = toy(&[5, 5]);
        let (tr, te) = stratified_split(&ds, &SplitSpec { train_fraction: 0.99, seed: 0 }).unwrap();
        assert_eq!((tr.rows(), te.rows()), (1, 1));
    }

    proptest! {
        #[test]
        fn partition_preserves_classes(
            labels in proptest::collection::vec(0u8..5, 2..60),
            fraction in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            // pad every class to at least two rows
            let mut labels = labels;
            for c in 0u8..5 {
                let n = labels.iter().filter(|&&l| l == c).count();
                if n == 1 { labels.push(c); }
            }
            let ds = toy(&labels);
            let spec = SplitSpec { train_fraction: fraction, seed };
            let (tr, te) = stratified_indices(&ds, &spec).unwrap();
            let mut all: Vec<usize> = tr.iter().chain(te.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.rows()).collect::<Vec<_>>());
            let trd = ds.subset(&tr);
            let ted = ds.subset(&te);
            for (label, n) in ds.class_counts() {
                let a = trd.class_counts().get(&label).copied().unwrap_or(0);
                let b = ted.class_counts().get(&label).copied().unwrap_or(0);
                prop_assert_eq!(a + b, n);
                prop_assert!(a >= 1 && b >= 1);
            }
        }
    }
}
