//! Second-order gradient boosting with a softmax objective.
//!
//! Each round fits one regression tree per class to the softmax gradient
//! `p - y` and hessian `2 p (1 - p)`. Splits maximize the usual structure
//! gain `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)]`, subject to the
//! minimum child hessian, and leaves take the Newton step `-G/(H+λ)` scaled by
//! the learning rate. Feature importance is total split gain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::HyperParams;
use super::tree::{midpoint, Tree};
use crate::matrix::Matrix;

const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// `rounds[r][k]` is the tree for class `k` in round `r`.
    pub rounds: Vec<Vec<Tree>>,
    pub n_classes: usize,
    /// Mean training cross-entropy before the first round and after each round.
    pub loss_history: Vec<f64>,
}

struct RegressionGrower<'a> {
    x: &'a Matrix,
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: Option<usize>,
    lambda: f64,
    min_child_weight: f64,
    eta: f64,
    tree: Tree,
    gain: Vec<f64>,
    goes_left: Vec<bool>,
}

impl RegressionGrower<'_> {
    /// `sorted[f]` lists the node's rows in ascending order of feature `f`.
    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let node = self.tree.push_leaf(-self.eta * g / (h + self.lambda));
        if rows.len() < 2 || self.max_depth.is_some_and(|d| depth >= d) {
            return node;
        }
        let parent_score = g * g / (h + self.lambda);
        let mut best: Option<(usize, f64, f64)> = None;
        for (f, order) in sorted.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..order.len() - 1 {
                let r = order[i];
                gl += self.grad[r];
                hl += self.hess[r];
                let (v, next) = (self.x.get(r, f), self.x.get(order[i + 1], f));
                if v == next {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.min_child_weight || hr < self.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + self.lambda) + gr * gr / (hr + self.lambda) - parent_score);
                if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                    best = Some((f, midpoint(v, next), gain));
                }
            }
        }
        let Some((f, thr, gain)) = best else {
            return node;
        };
        self.gain[f] += gain;
        for &r in &sorted[f] {
            self.goes_left[r] = self.x.get(r, f) <= thr;
        }
        let (left, right): (Vec<_>, Vec<_>) = sorted
            .into_iter()
            .map(|order| order.into_iter().partition::<Vec<usize>, _>(|&r| self.goes_left[r]))
            .unzip();
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.tree.make_split(node, f, thr, l, r);
        node
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Mean softmax cross-entropy of raw scores (row-major, `k` per row).
pub fn cross_entropy(scores: &[f64], y: &[usize], k: usize) -> f64 {
    let n = y.len();
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let row = &scores[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        total += lse - row[yi];
    }
    total / n as f64
}

impl BoostedModel {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, p: &HyperParams) -> (Self, Vec<f64>) {
        let n = x.rows();
        let k = n_classes;
        let mut scores = vec![0.0; n * k];
        let mut gain = vec![0.0; x.cols()];
        let mut rounds = Vec::with_capacity(p.n_trees);
        let mut loss_history = vec![cross_entropy(&scores, y, k)];
        let presorted: Vec<Vec<usize>> = (0..x.cols())
            .map(|f| {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
                order
            })
            .collect();

        for _ in 0..p.n_trees {
            let mut prob = scores.clone();
            for row in prob.chunks_mut(k) {
                softmax_in_place(row);
            }
            let grown: Vec<(Tree, Vec<f64>)> = (0..k)
                .into_par_iter()
                .map(|c| {
                    let grad: Vec<f64> = (0..n)
                        .map(|i| prob[i * k + c] - if y[i] == c { 1.0 } else { 0.0 })
                        .collect();
                    let hess: Vec<f64> = (0..n)
                        .map(|i| {
                            let q = prob[i * k + c];
                            (2.0 * q * (1.0 - q)).max(MIN_HESSIAN)
                        })
                        .collect();
                    let mut g = RegressionGrower {
                        x,
                        grad: &grad,
                        hess: &hess,
                        max_depth: p.max_depth,
                        lambda: p.reg_lambda,
                        min_child_weight: p.min_child_weight,
                        eta: p.learning_rate,
                        tree: Tree::default(),
                        gain: vec![0.0; x.cols()],
                        goes_left: vec![false; n],
                    };
                    g.grow(presorted.clone(), 0);
                    (g.tree, g.gain)
                })
                .collect();
            let mut trees = Vec::with_capacity(k);
            for (c, (tree, g)) in grown.into_iter().enumerate() {
                for i in 0..n {
                    scores[i * k + c] += tree.predict_row(x.row(i));
                }
                for (a, b) in gain.iter_mut().zip(&g) {
                    *a += b;
                }
                trees.push(tree);
            }
            rounds.push(trees);
            loss_history.push(cross_entropy(&scores, y, k));
        }
        (
            BoostedModel {
                rounds,
                n_classes,
                loss_history,
            },
            gain,
        )
    }

    pub fn raw_scores(&self, row: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_classes];
        for round in &self.rounds {
            for (c, t) in round.iter().enumerate() {
                s[c] += t.predict_row(row);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn cross_entropy_of_uniform_scores() {
        let y = [0, 2, 1];
        let ce = cross_entropy(&[0.0; 9], &y, 3);
        assert!((ce - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_round_stump_leaf_values() {
        // two rows, two classes, one split: each leaf holds one row
        let x = Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let y = [0, 1];
        let mut p = HyperParams::defaults(ModelKind::Xgb);
        p.n_trees = 1;
        p.min_child_weight = 0.0;
        p.reg_lambda = 1.0;
        let (m, gain) = BoostedModel::fit(&x, &y, 2, &p);
        // p = 0.5, g = -0.5 for the true class, h = 0.5; leaf = -0.3 * g / (h + 1)
        let t = &m.rounds[0][0];
        assert!((t.predict_row(&[0.0]) - 0.3 * 0.5 / 1.5).abs() < 1e-12);
        assert!((t.predict_row(&[1.0]) + 0.3 * 0.5 / 1.5).abs() < 1e-12);
        assert!(gain[0] > 0.0);
    }
}
