//! Binary decision trees stored as flat node arrays.
//!
//! Classification trees are grown by CART on Gini impurity. With
//! `random_thresholds` each candidate feature gets one uniform threshold
//! between its node minimum and maximum (extremely randomized trees).
//! Candidate splits are scanned in ascending feature order and ascending
//! threshold, and only a strictly better score replaces the incumbent, so
//! ties resolve to the lowest feature index and then the lowest threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub const LEAF: i32 = -1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tree {
    /// Split feature per node, or [`LEAF`].
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// Class index (classification) or leaf weight (regression).
    pub value: Vec<f64>,
}

impl Tree {
    pub(crate) fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.feature.len() - 1
    }

    pub(crate) fn make_split(&mut self, node: usize, feature: usize, threshold: f64, left: usize, right: usize) {
        self.feature[node] = feature as i32;
        self.threshold[node] = threshold;
        self.left[node] = left as u32;
        self.right[node] = right as u32;
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = 0usize;
        while self.feature[node] != LEAF {
            node = if row[self.feature[node] as usize] <= self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
        self.value[node]
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, n: usize) -> usize {
            if t.feature[n] == LEAF {
                0
            } else {
                1 + walk(t, t.left[n] as usize).max(walk(t, t.right[n] as usize))
            }
        }
        if self.feature.is_empty() {
            0
        } else {
            walk(self, 0)
        }
    }
}

/// Midpoint threshold that still separates `lo` from `hi` in floating point.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Draws `k` distinct feature indices out of `d` and returns them sorted.
pub(crate) fn sample_features(d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..d).collect();
    if k < d {
        for i in 0..k {
            let j = rng.random_range(i..d);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool.sort_unstable();
    }
    pool
}

#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: usize,
    pub random_thresholds: bool,
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    cfg: TreeConfig,
    importance: Vec<f64>,
    tree: Tree,
}

struct Split {
    feature: usize,
    threshold: f64,
    /// sum over children of (sum of squared class counts) / size; larger is purer
    purity: f64,
}

fn class_counts(y: &[usize], rows: &[usize], n_classes: usize) -> Vec<f64> {
    let mut c = vec![0.0; n_classes];
    for &r in rows {
        c[y[r]] += 1.0;
    }
    c
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = class_counts(self.y, rows, self.n_classes);
        let node = self.tree.push_leaf(argmax_lowest(&counts) as f64);
        let n = rows.len() as f64;
        let sumsq: f64 = counts.iter().map(|c| c * c).sum();
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure
            || rows.len() < self.cfg.min_samples_split
            || self.cfg.max_depth.is_some_and(|d| depth >= d)
        {
            return node;
        }

        let features = sample_features(self.x.cols(), self.cfg.max_features, rng);
        let mut best: Option<Split> = None;
        for &f in &features {
            let cand = if self.cfg.random_thresholds {
                self.random_split(rows, f, rng)
            } else {
                self.best_split(rows, f)
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.purity > b.purity) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best else {
            return node;
        };

        // impurity decrease, in units of samples: n*gini(parent) - sum child n*gini
        self.importance[split.feature] += (split.purity - sumsq / n).max(0.0);

        let pivot = partition(rows, |r| self.x.get(r, split.feature) <= split.threshold);
        let (l_rows, r_rows) = rows.split_at_mut(pivot);
        let l = self.grow(l_rows, depth + 1, rng);
        let r = self.grow(r_rows, depth + 1, rng);
        self.tree.make_split(node, split.feature, split.threshold, l, r);
        node
    }

    fn best_split(&self, rows: &[usize], f: usize) -> Option<Split> {
        let mut order: Vec<(f64, usize)> = rows.iter().map(|&r| (self.x.get(r, f), self.y[r])).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = class_counts(self.y, rows, self.n_classes);
        let mut left = vec![0.0; self.n_classes];
        let mut right = total;
        let mut sq_l = 0.0;
        let mut sq_r: f64 = right.iter().map(|c| c * c).sum();
        let n = order.len();
        let mut best: Option<Split> = None;
        for i in 0..n - 1 {
            let k = order[i].1;
            sq_l += 2.0 * left[k] + 1.0;
            sq_r -= 2.0 * right[k] - 1.0;
            left[k] += 1.0;
            right[k] -= 1.0;
            if order[i].0 == order[i + 1].0 {
                continue;
            }
            let nl = (i + 1) as f64;
            let purity = sq_l / nl + sq_r / (n as f64 - nl);
            if best.as_ref().is_none_or(|b| purity > b.purity) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(order[i].0, order[i + 1].0),
                    purity,
                });
            }
        }
        best
    }

    fn random_split(&self, rows: &[usize], f: usize, rng: &mut ChaCha8Rng) -> Option<Split> {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            let v = self.x.get(r, f);
            (lo.min(v), hi.max(v))
        });
        if hi <= lo {
            return None;
        }
        let threshold = rng.random_range(lo..hi);
        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        for &r in rows {
            if self.x.get(r, f) <= threshold {
                left[self.y[r]] += 1.0;
            } else {
                right[self.y[r]] += 1.0;
            }
        }
        let nl: f64 = left.iter().sum();
        let nr: f64 = right.iter().sum();
        if nl == 0.0 || nr == 0.0 {
            return None;
        }
        let purity = left.iter().map(|c| c * c).sum::<f64>() / nl + right.iter().map(|c| c * c).sum::<f64>() / nr;
        Some(Split {
            feature: f,
            threshold,
            purity,
        })
    }
}

/// Stable-enough in-place partition; returns the count of rows satisfying `pred`.
pub(crate) fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut left: Vec<usize> = Vec::with_capacity(rows.len());
    let mut right: Vec<usize> = Vec::new();
    for &r in rows.iter() {
        if pred(r) {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    let pivot = left.len();
    rows[..pivot].copy_from_slice(&left);
    rows[pivot..].copy_from_slice(&right);
    pivot
}

/// Grows one classification tree on `rows` (duplicates allowed, for bootstrap
/// samples). Returns the tree and its unnormalized impurity decrease per feature.
pub fn grow_classifier(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    mut rows: Vec<usize>,
    cfg: TreeConfig,
    rng: &mut ChaCha8Rng,
) -> (Tree, Vec<f64>) {
    let mut g = Grower {
        x,
        y,
        n_classes,
        cfg,
        importance: vec![0.0; x.cols()],
        tree: Tree::default(),
    };
    g.grow(&mut rows, 0, rng);
    (g.tree, g.importance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn cfg(depth: Option<usize>) -> TreeConfig {
        TreeConfig {
            max_depth: depth,
            min_samples_split: 2,
            max_features: 2,
            random_thresholds: false,
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = Matrix::from_vec(4, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let y = [0, 1, 1, 0];
        let mut rng = seed::rng(0);
        let (t, _) = grow_classifier(&x, &y, 2, (0..4).collect(), cfg(Some(2)), &mut rng);
        for i in 0..4 {
            assert_eq!(t.predict_row(x.row(i)) as usize, y[i]);
        }
        // zero-gain root: tie rule picks feature 0 at the lowest threshold
        assert_eq!(t.feature[0], 0);
        assert_eq!(t.threshold[0], 0.5);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn depth_cap_respected() {
        let x = Matrix::from_vec(8, 1, (0..8).map(|i| i as f64).collect()).unwrap();
        let y = [0, 1, 0, 1, 0, 1, 0, 1];
        let mut rng = seed::rng(0);
        let (t, _) = grow_classifier(&x, &y, 2, (0..8).collect(), cfg(Some(1)), &mut rng);
        assert_eq!(t.depth(), 1);
        let (t, _) = grow_classifier(&x, &y, 2, (0..8).collect(), cfg(None), &mut rng);
        for i in 0..8 {
            assert_eq!(t.predict_row(x.row(i)) as usize, y[i]);
        }
    }

    #[test]
    fn importance_is_gini_decrease() {
        // one perfect split of 2+2 rows: parent n*gini = 4*0.5 = 2, children 0
        let x = Matrix::from_vec(4, 2, vec![0.0, 7.0, 0.0, 7.0, 1.0, 7.0, 1.0, 7.0]).unwrap();
        let y = [0, 0, 1, 1];
        let mut rng = seed::rng(0);
        let (_, imp) = grow_classifier(&x, &y, 2, (0..4).collect(), cfg(None), &mut rng);
        assert!((imp[0] - 2.0).abs() < 1e-12);
        assert_eq!(imp[1], 0.0);
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
    }

    #[test]
    fn random_thresholds_still_fit_training_data() {
        let x = Matrix::from_vec(6, 1, vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]).unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let mut c = cfg(None);
        c.random_thresholds = true;
        let mut rng = seed::rng(4);
        let (t, _) = grow_classifier(&x, &y, 2, (0..6).collect(), c, &mut rng);
        for i in 0..6 {
            assert_eq!(t.predict_row(x.row(i)) as usize, y[i]);
        }
    }
}
