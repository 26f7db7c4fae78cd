//! Model-agnostic permutation importance on macro F1.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::TrainedModel;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval::{confusion, score};
use crate::matrix::Matrix;
use crate::seed;

fn macro_f1(model: &TrainedModel, x: &Matrix, truth: &[crate::data::MixtureLabel]) -> Result<f64> {
    let pred = model.predict(x)?;
    Ok(score(&confusion(truth, &pred)?).macro_f1)
}

/// Mean drop in macro F1 when one sensor column is shuffled, floored at zero
/// and normalized to sum to 1 (uniform when no column matters). Column `i`,
/// repeat `r` shuffles with the stream `derive_index(derive_index(seed, i), r)`.
pub fn permutation_importance(
    model: &TrainedModel,
    data: &LabeledDataset,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if repeats == 0 {
        return Err(Error::param("repeats", "must be at least 1"));
    }
    let x = data.features();
    let baseline = macro_f1(model, x, data.labels())?;
    let drops: Vec<f64> = (0..x.cols())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let column_seed = seed::derive_index(seed, i as u64);
            let original = x.column(i);
            let mut total = 0.0;
            for r in 0..repeats {
                let mut shuffled = original.clone();
                shuffled.shuffle(&mut seed::rng(seed::derive_index(column_seed, r as u64)));
                let mut xp = x.clone();
                for (row, v) in shuffled.iter().enumerate() {
                    xp.set(row, i, *v);
                }
                total += baseline - macro_f1(model, &xp, data.labels())?;
            }
            Ok((total / repeats as f64).max(0.0))
        })
        .collect::<Result<_>>()?;
    Ok(super::normalize_or_uniform(drops))
}
