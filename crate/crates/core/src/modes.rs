//! Blue and green operating modes.
//!
//! Blue keeps every sensor powered. A green mode powers only the top-k sensors
//! of the committee ranking, and its readout model is retrained on that
//! projection rather than fed zeros for the idle sensors.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::committee::SensorRanking;
use crate::data::{stratified_indices, LabeledDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ModelScorecard};
use crate::models::{fit, ModelKind, ZooConfig};
use crate::seed;

pub const BLUE: &str = "blue";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub name: String,
    pub active_sensors: Vec<String>,
    pub readout: ModelKind,
}

impl ModeConfig {
    pub fn is_blue(&self) -> bool {
        self.name == BLUE
    }
}

/// Blue (all sensors in dataset order) followed by one green mode per size,
/// each taking a prefix of the ranking.
pub fn build_modes(sensor_ids: &[String], ranking: &SensorRanking, sizes: &[usize], readout: ModelKind) -> Result<Vec<ModeConfig>> {
    let total = sensor_ids.len();
    if ranking.selected.len() != total {
        return Err(Error::shape("ranking", total, ranking.selected.len()));
    }
    let mut modes = vec![ModeConfig {
        name: BLUE.into(),
        active_sensors: sensor_ids.to_vec(),
        readout,
    }];
    for &k in sizes {
        if k == 0 || k > total {
            return Err(Error::param("mode size", format!("{k} is outside 1..={total}")));
        }
        modes.push(ModeConfig {
            name: format!("green-{k}"),
            active_sensors: ranking.top(k).to_vec(),
            readout,
        });
    }
    Ok(modes)
}

/// Fraction of energy saved when `active` of `total` equal-power sensors run.
pub fn energy_savings(active: usize, total: usize) -> Result<f64> {
    if active == 0 || active > total {
        return Err(Error::param("active", format!("{active} is outside 1..={total}")));
    }
    Ok((total - active) as f64 / total as f64)
}

/// Savings with per-sensor power draw; `power` is aligned with `sensor_ids`.
pub fn energy_savings_weighted(active: &[String], sensor_ids: &[String], power: &[f64]) -> Result<f64> {
    if power.len() != sensor_ids.len() {
        return Err(Error::shape("sensor power", sensor_ids.len(), power.len()));
    }
    if power.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::param("sensor power", "entries must be finite and nonnegative"));
    }
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return Err(Error::param("sensor power", "total power is zero"));
    }
    let mut used = 0.0;
    for s in active {
        let i = sensor_ids
            .iter()
            .position(|x| x == s)
            .ok_or_else(|| Error::param("active", format!("unknown sensor `{s}`")))?;
        used += power[i];
    }
    Ok(1.0 - used / total)
}

/// Drop in F1 relative to blue; negative when the subset does better.
pub fn f1_reduction(blue_f1: f64, mode_f1: f64) -> f64 {
    blue_f1 - mode_f1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: ModeConfig,
    pub mean: ModelScorecard,
    pub std: ModelScorecard,
    pub repeats: Vec<ModelScorecard>,
    pub f1_reduction_vs_blue: f64,
    pub energy_savings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub modes: Vec<ModeResult>,
}

/// One row per mode in the layout of the paper's metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTableRow {
    pub mode: String,
    pub sensors: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_sd: f64,
    pub f1_reduction: f64,
    pub energy_savings: f64,
}

impl ModeReport {
    pub fn get(&self, name: &str) -> Option<&ModeResult> {
        self.modes.iter().find(|m| m.mode.name == name)
    }

    pub fn table(&self) -> Vec<ModeTableRow> {
        self.modes
            .iter()
            .map(|m| ModeTableRow {
                mode: m.mode.name.clone(),
                sensors: m.mode.active_sensors.len(),
                accuracy: m.mean.accuracy,
                precision: m.mean.macro_precision,
                recall: m.mean.macro_recall,
                f1: m.mean.macro_f1,
                f1_sd: m.std.macro_f1,
                f1_reduction: m.f1_reduction_vs_blue,
                energy_savings: m.energy_savings,
            })
            .collect()
    }

    /// Long-format per-repeat scores for plotting.
    pub fn write_repeats_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["mode", "sensors", "repeat", "accuracy", "macro_precision", "macro_recall", "macro_f1", "micro_f1"])?;
        for m in &self.modes {
            for (r, s) in m.repeats.iter().enumerate() {
                w.write_record([
                    m.mode.name.clone(),
                    m.mode.active_sensors.len().to_string(),
                    r.to_string(),
                    s.accuracy.to_string(),
                    s.macro_precision.to_string(),
                    s.macro_recall.to_string(),
                    s.macro_f1.to_string(),
                    s.micro_f1.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn repeat_split_seed(master: u64, r: usize) -> u64 {
    seed::derive_index(seed::derive(master, "modes/split"), r as u64)
}

fn repeat_fit_seed(master: u64, r: usize) -> u64 {
    seed::derive_index(seed::derive(master, "modes/fit"), r as u64)
}

/// Scores of one mode over `repeats` fresh stratified splits. Repeat `r` uses
/// the same split for every mode, so modes are compared on equal footing.
pub fn evaluate_mode(mode: &ModeConfig, ds: &LabeledDataset, zoo: &ZooConfig, repeats: usize, master: u64) -> Result<Vec<ModelScorecard>> {
    if repeats == 0 {
        return Err(Error::param("repeats", "must be at least 1"));
    }
    let projected = ds.project(&mode.active_sensors)?;
    (0..repeats)
        .into_par_iter()
        .map(|r| {
            let split = SplitSpec {
                train_fraction: zoo.train_fraction,
                seed: repeat_split_seed(master, r),
            };
            let (tr, te) = stratified_indices(&projected, &split)?;
            let params = zoo.params_for(mode.readout, repeat_fit_seed(master, r));
            let model = fit(mode.readout, &params, &projected.subset(&tr))?;
            Ok(evaluate(&model, &projected.subset(&te))?.1)
        })
        .collect()
}

/// Evaluates every mode; the first mode must be blue. `power` switches energy
/// accounting from equal per-sensor draw to the given vector.
pub fn evaluate_modes(
    modes: &[ModeConfig],
    ds: &LabeledDataset,
    zoo: &ZooConfig,
    repeats: usize,
    master: u64,
    power: Option<&[f64]>,
) -> Result<ModeReport> {
    if modes.first().is_none_or(|m| !m.is_blue()) {
        return Err(Error::param("modes", "the first mode must be blue"));
    }
    let scores: Vec<Vec<ModelScorecard>> = modes
        .iter()
        .map(|m| evaluate_mode(m, ds, zoo, repeats, master))
        .collect::<Result<_>>()?;
    let blue_f1 = ModelScorecard::mean_std(&scores[0]).0.macro_f1;
    let out = modes
        .iter()
        .zip(scores)
        .map(|(mode, reps)| {
            let (mean, std) = ModelScorecard::mean_std(&reps);
            let savings = match power {
                Some(p) => energy_savings_weighted(&mode.active_sensors, ds.sensor_ids(), p)?,
                None => energy_savings(mode.active_sensors.len(), ds.n_sensors())?,
            };
            Ok(ModeResult {
                mode: mode.clone(),
                mean,
                std,
                repeats: reps,
                f1_reduction_vs_blue: if mode.is_blue() { 0.0 } else { f1_reduction(blue_f1, mean.macro_f1) },
                energy_savings: savings,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ModeReport { modes: out })
}
