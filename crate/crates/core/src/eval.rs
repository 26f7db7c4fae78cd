//! Confusion matrices and macro/micro precision, recall and F1.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::TrainedModel;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub row_normalized: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelScorecard {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

impl ModelScorecard {
    /// Smallest of the six macro/micro scores.
    pub fn min_score(&self) -> f64 {
        [
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.micro_precision,
            self.micro_recall,
            self.micro_f1,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    fn fields(&self) -> [f64; 7] {
        [
            self.accuracy,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.micro_precision,
            self.micro_recall,
            self.micro_f1,
        ]
    }

    fn from_fields(f: [f64; 7]) -> Self {
        ModelScorecard {
            accuracy: f[0],
            macro_precision: f[1],
            macro_recall: f[2],
            macro_f1: f[3],
            micro_precision: f[4],
            micro_recall: f[5],
            micro_f1: f[6],
        }
    }

    /// Field-wise mean and (sample) standard deviation.
    pub fn mean_std(cards: &[ModelScorecard]) -> (ModelScorecard, ModelScorecard) {
        let n = cards.len();
        if n == 0 {
            return (ModelScorecard::default(), ModelScorecard::default());
        }
        let mut mean = [0.0; 7];
        for c in cards {
            for (m, v) in mean.iter_mut().zip(c.fields()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; 7];
        if n > 1 {
            for c in cards {
                for ((s, v), m) in var.iter_mut().zip(c.fields()).zip(mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s = (*s / (n - 1) as f64).sqrt());
        }
        (Self::from_fields(mean), Self::from_fields(var))
    }
}

pub fn confusion<L: Ord + Clone + Display>(truth: &[L], pred: &[L]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::shape("confusion predictions", truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::DegenerateData("confusion matrix of zero rows".into()));
    }
    let classes: Vec<&L> = truth.iter().chain(pred).collect::<BTreeSet<_>>().into_iter().collect();
    let index = |l: &L| classes.binary_search(&l).expect("class present");
    let c = classes.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (t, p) in truth.iter().zip(pred) {
        counts[index(t)][index(p)] += 1;
    }
    let row_normalized = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&v| if total == 0 { 0.0 } else { v as f64 / total as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        classes: classes.iter().map(|l| l.to_string()).collect(),
        counts,
        row_normalized,
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class (precision, recall, F1) in class order; 0/0 counts as 0.
pub fn per_class(cm: &ConfusionMatrix) -> Vec<(f64, f64, f64)> {
    let c = cm.classes.len();
    (0..c)
        .map(|k| {
            let tp = cm.counts[k][k];
            let predicted: u64 = (0..c).map(|r| cm.counts[r][k]).sum();
            let actual: u64 = cm.counts[k].iter().sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, actual);
            (p, r, harmonic(p, r))
        })
        .collect()
}

/// Macro scores average over every class in the matrix, including classes
/// that only occur as predictions.
pub fn score(cm: &ConfusionMatrix) -> ModelScorecard {
    let c = cm.classes.len();
    let stats = per_class(cm);
    let mean = |f: fn(&(f64, f64, f64)) -> f64| stats.iter().map(f).sum::<f64>() / c.max(1) as f64;

    let total: u64 = cm.counts.iter().flatten().sum();
    let tp: u64 = (0..c).map(|k| cm.counts[k][k]).sum();
    // pooled: every wrong prediction is one FP and one FN
    let fp = total - tp;
    let fn_ = total - tp;
    let micro_p = ratio(tp, tp + fp);
    let micro_r = ratio(tp, tp + fn_);
    ModelScorecard {
        accuracy: ratio(tp, total),
        macro_precision: mean(|s| s.0),
        macro_recall: mean(|s| s.1),
        macro_f1: mean(|s| s.2),
        micro_precision: micro_p,
        micro_recall: micro_r,
        micro_f1: ratio(2 * tp, 2 * tp + fp + fn_),
    }
}

pub fn evaluate(model: &TrainedModel, test: &LabeledDataset) -> Result<(ConfusionMatrix, ModelScorecard)> {
    let pred = model.predict(test.features())?;
    let cm = confusion(test.labels(), &pred)?;
    let sc = score(&cm);
    Ok((cm, sc))
}

/// Plot-ready CSV: one row per (true, predicted) cell.
pub fn write_confusion_csv<W: Write>(cm: &ConfusionMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["true", "predicted", "count", "fraction"])?;
    for (r, t) in cm.classes.iter().enumerate() {
        for (c, p) in cm.classes.iter().enumerate() {
            w.write_record([
                t.clone(),
                p.clone(),
                cm.counts[r][c].to_string(),
                cm.row_normalized[r][c].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
