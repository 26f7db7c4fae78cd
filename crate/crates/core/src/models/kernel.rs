//! One-vs-rest RBF support vector classifier trained by dual coordinate ascent.
//!
//! The bias is folded into the kernel (`K + 1`), which removes the equality
//! constraint from the dual so each coordinate can be updated in closed form
//! and clipped to `[0, C]`. Training stops when the largest projected-gradient
//! violation in a pass drops below the tolerance, or after `iterations`
//! passes.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::HyperParams;
use super::scale::Standardizer;
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub scaler: Standardizer,
    pub gamma: f64,
    /// Standardized training rows.
    pub support: Matrix,
    /// `alpha_i * y_i` per class and training row.
    pub coef: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median Euclidean distance over all row pairs; 1 when undefined or zero.
pub fn median_pairwise_distance(x: &Matrix) -> f64 {
    let n = x.rows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(x.row(i), x.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if med > 1e-12 {
        med
    } else {
        1.0
    }
}

impl KernelModel {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, p: &HyperParams) -> (Self, bool) {
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let width = p.rbf_width.unwrap_or_else(|| median_pairwise_distance(&xs));
        let gamma = 1.0 / (2.0 * width * width);
        let n = xs.rows();

        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = (-gamma * sq_dist(xs.row(i), xs.row(j))).exp() + 1.0;
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
        }

        let fits: Vec<(Vec<f64>, bool)> = (0..n_classes)
            .into_par_iter()
            .map(|c| {
                let target: Vec<f64> = y.iter().map(|&k| if k == c { 1.0 } else { -1.0 }).collect();
                dual_coordinate_ascent(&gram, &target, p, seed::derive_index(p.seed, c as u64))
            })
            .collect();
        let converged = fits.iter().all(|f| f.1);
        (
            KernelModel {
                scaler,
                gamma,
                support: xs,
                coef: fits.into_iter().map(|f| f.0).collect(),
            },
            converged,
        )
    }

    pub fn decision(&self, row: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(c, v)| (v - self.scaler.mean[c]) / self.scaler.scale[c])
            .collect();
        let k: Vec<f64> = self
            .support
            .iter_rows()
            .map(|s| (-self.gamma * sq_dist(s, &z)).exp() + 1.0)
            .collect();
        self.coef
            .iter()
            .map(|coef| coef.iter().zip(&k).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn dual_coordinate_ascent(gram: &[f64], y: &[f64], p: &HyperParams, seed: u64) -> (Vec<f64>, bool) {
    let n = y.len();
    let c = p.svm_c;
    let mut alpha = vec![0.0; n];
    // f[i] = sum_j alpha_j y_j K~(i, j)
    let mut f = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed);
    let mut converged = false;
    for _ in 0..p.iterations {
        order.shuffle(&mut rng);
        let mut violation = 0.0f64;
        for &i in &order {
            let g = y[i] * f[i] - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            violation = violation.max(pg.abs());
            if pg.abs() <= 1e-12 {
                continue;
            }
            let qii = gram[i * n + i];
            let next = (alpha[i] - g / qii).clamp(0.0, c);
            let delta = (next - alpha[i]) * y[i];
            if delta != 0.0 {
                alpha[i] = next;
                let row = &gram[i * n..(i + 1) * n];
                for (fj, kij) in f.iter_mut().zip(row) {
                    *fj += delta * kij;
                }
            }
        }
        if violation < p.tolerance {
            converged = true;
            break;
        }
    }
    (alpha.iter().zip(y).map(|(a, yi)| a * yi).collect(), converged)
}
