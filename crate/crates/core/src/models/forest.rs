//! DT, ET and RF as majority-vote ensembles of classification trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::HyperParams;
use super::tree::{grow_classifier, Tree, TreeConfig};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
}

impl Forest {
    /// Tree `t` draws from the stream `derive_index(seed, t)`: first its
    /// bootstrap sample (if enabled), then feature subsets and thresholds.
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        p: &HyperParams,
        n_trees: usize,
        random_thresholds: bool,
    ) -> (Self, Vec<f64>) {
        let cfg = TreeConfig {
            max_depth: p.max_depth,
            min_samples_split: p.min_samples_split,
            max_features: p.max_features.resolve(x.cols()),
            random_thresholds,
        };
        let n = x.rows();
        let grown: Vec<(Tree, Vec<f64>)> = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive_index(p.seed, t as u64));
                let rows: Vec<usize> = if p.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                grow_classifier(x, y, n_classes, rows, cfg, &mut rng)
            })
            .collect();

        // mean of per-tree normalized importances
        let mut importance = vec![0.0; x.cols()];
        for (_, imp) in &grown {
            let total: f64 = imp.iter().sum();
            if total > 0.0 {
                for (a, v) in importance.iter_mut().zip(imp) {
                    *a += v / total;
                }
            }
        }
        (
            Forest {
                trees: grown.into_iter().map(|g| g.0).collect(),
                n_classes,
            },
            importance,
        )
    }

    /// Majority vote; ties go to the lowest class index.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut votes = vec![0u32; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row) as usize] += 1;
        }
        let mut best = 0;
        for (k, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = k;
            }
        }
        best
    }
}
