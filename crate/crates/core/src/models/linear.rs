//! One-vs-rest linear classifiers on standardized features.
//!
//! LR and EN minimize the mean logistic loss plus `l2/2 ||w||^2 + l1 ||w||_1`
//! by proximal batch gradient descent (step `1/L` from a power-iteration
//! estimate of the Lipschitz constant). L-SVC minimizes the mean hinge loss
//! plus `l2/2 ||w||^2` by subgradient descent with a `lr/sqrt(t)` step,
//! keeping the best iterate. The bias is the last weight and is never
//! penalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::HyperParams;
use super::scale::Standardizer;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Logistic,
    Hinge,
}

/// Regularized training objective for one binary problem with targets in {-1, +1}.
pub struct LinearObjective<'a> {
    pub x: &'a Matrix,
    pub y: &'a [f64],
    pub loss: Loss,
    pub l1: f64,
    pub l2: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearObjective<'_> {
    fn margin(&self, w: &[f64], r: usize) -> f64 {
        let d = self.x.cols();
        let dot: f64 = self.x.row(r).iter().zip(&w[..d]).map(|(a, b)| a * b).sum();
        self.y[r] * (dot + w[d])
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let n = self.x.rows() as f64;
        let d = self.x.cols();
        let data: f64 = (0..self.x.rows())
            .map(|r| {
                let m = self.margin(w, r);
                match self.loss {
                    Loss::Logistic => softplus(-m),
                    Loss::Hinge => (1.0 - m).max(0.0),
                }
            })
            .sum::<f64>()
            / n;
        let sq: f64 = w[..d].iter().map(|v| v * v).sum();
        let abs: f64 = w[..d].iter().map(|v| v.abs()).sum();
        data + 0.5 * self.l2 * sq + self.l1 * abs
    }

    /// Gradient of the loss and L2 term only.
    pub fn smooth_gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = self.x.rows() as f64;
        let d = self.x.cols();
        let mut g = vec![0.0; d + 1];
        for r in 0..self.x.rows() {
            let m = self.margin(w, r);
            let coef = match self.loss {
                Loss::Logistic => -self.y[r] * sigmoid(-m),
                Loss::Hinge => {
                    if m < 1.0 {
                        -self.y[r]
                    } else {
                        0.0
                    }
                }
            };
            if coef != 0.0 {
                for (gi, xi) in g.iter_mut().zip(self.x.row(r)) {
                    *gi += coef * xi;
                }
                g[d] += coef;
            }
        }
        g.iter_mut().for_each(|v| *v /= n);
        for (gi, wi) in g[..d].iter_mut().zip(&w[..d]) {
            *gi += self.l2 * wi;
        }
        g
    }

    /// Full (sub)gradient, with `sign(w)` for the L1 term.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let d = self.x.cols();
        let mut g = self.smooth_gradient(w);
        for (gi, wi) in g[..d].iter_mut().zip(&w[..d]) {
            *gi += self.l1 * if *wi > 0.0 { 1.0 } else if *wi < 0.0 { -1.0 } else { 0.0 };
        }
        g
    }
}

/// Largest eigenvalue of `A^T A / n` for `A = [x | 1]`, by power iteration.
fn gram_spectral_norm(x: &Matrix) -> f64 {
    let (n, d) = (x.rows(), x.cols());
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut out = vec![0.0; d + 1];
        for r in 0..n {
            let row = x.row(r);
            let av: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d];
            for (o, a) in out.iter_mut().zip(row) {
                *o += av * a;
            }
            out[d] += av;
        }
        out.iter_mut().for_each(|o| *o /= n.max(1) as f64);
        let norm = out.iter().map(|o| o * o).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next: Vec<f64> = out.iter().map(|o| o / norm).collect();
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        lambda = norm;
        if delta < 1e-10 {
            break;
        }
    }
    lambda
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Returns the weights and whether the tolerance was met within the iteration cap.
pub fn train_logistic(obj: &LinearObjective, iterations: usize, tolerance: f64) -> (Vec<f64>, bool) {
    let d = obj.x.cols();
    let lipschitz = 0.25 * gram_spectral_norm(obj.x) + obj.l2;
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut w = vec![0.0; d + 1];
    for _ in 0..iterations {
        let g = obj.smooth_gradient(&w);
        let mut moved = 0.0f64;
        for k in 0..=d {
            let raw = w[k] - step * g[k];
            let next = if k < d { soft_threshold(raw, step * obj.l1) } else { raw };
            moved = moved.max((next - w[k]).abs());
            w[k] = next;
        }
        if moved / step < tolerance {
            return (w, true);
        }
    }
    (w, false)
}

pub fn train_hinge(obj: &LinearObjective, iterations: usize, learning_rate: f64, tolerance: f64) -> (Vec<f64>, bool) {
    let d = obj.x.cols();
    let mut w = vec![0.0; d + 1];
    let mut best = w.clone();
    let mut best_val = obj.value(&w);
    let mut window_start = 0;
    let mut val_at_window = best_val;
    for t in 0..iterations {
        let g = obj.gradient(&w);
        let step = learning_rate / ((t + 1) as f64).sqrt();
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= step * gi;
        }
        let val = obj.value(&w);
        if val < best_val {
            best_val = val;
            best.copy_from_slice(&w);
        }
        // stalled: the best objective moved less than `tolerance` over the last tenth of the run
        let window = (iterations / 10).max(1);
        if t + 1 - window_start >= window {
            if val_at_window - best_val < tolerance * (1.0 + best_val.abs()) {
                return (best, true);
            }
            val_at_window = best_val;
            window_start = t + 1;
        }
    }
    (best, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub scaler: Standardizer,
    /// One weight vector per class, bias last.
    pub weights: Vec<Vec<f64>>,
}

impl LinearModel {
    pub fn fit(loss: Loss, x: &Matrix, y: &[usize], n_classes: usize, p: &HyperParams) -> (Self, bool) {
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let fits: Vec<(Vec<f64>, bool)> = (0..n_classes)
            .into_par_iter()
            .map(|c| {
                let target: Vec<f64> = y.iter().map(|&k| if k == c { 1.0 } else { -1.0 }).collect();
                let obj = LinearObjective {
                    x: &xs,
                    y: &target,
                    loss,
                    l1: p.l1,
                    l2: p.l2,
                };
                match loss {
                    Loss::Logistic => train_logistic(&obj, p.iterations, p.tolerance),
                    Loss::Hinge => train_hinge(&obj, p.iterations, p.learning_rate, p.tolerance),
                }
            })
            .collect();
        let converged = fits.iter().all(|f| f.1);
        (
            LinearModel {
                scaler,
                weights: fits.into_iter().map(|f| f.0).collect(),
            },
            converged,
        )
    }

    pub fn decision(&self, row: &[f64]) -> Vec<f64> {
        let d = row.len();
        self.weights
            .iter()
            .map(|w| {
                row.iter()
                    .enumerate()
                    .map(|(c, v)| (v - self.scaler.mean[c]) / self.scaler.scale[c] * w[c])
                    .sum::<f64>()
                    + w[d]
            })
            .collect()
    }

    /// Mean absolute coefficient across classes, per feature (unnormalized).
    pub fn coefficient_magnitude(&self) -> Vec<f64> {
        let d = self.scaler.mean.len();
        let k = self.weights.len().max(1) as f64;
        (0..d)
            .map(|f| self.weights.iter().map(|w| w[f].abs()).sum::<f64>() / k)
            .collect()
    }
}
