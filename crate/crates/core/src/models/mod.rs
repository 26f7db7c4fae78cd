//! The eight-model zoo behind one contract: fit, predict, feature importance.
//!
//! | kind    | training                                   | importance                  |
//! |---------|--------------------------------------------|-----------------------------|
//! | LR, EN  | proximal gradient descent, one-vs-rest     | mean abs coefficient        |
//! | L-SVC   | hinge subgradient descent, one-vs-rest     | mean abs coefficient        |
//! | RBF-SVC | dual coordinate ascent, one-vs-rest        | permutation (training data) |
//! | DT      | CART, Gini                                 | impurity decrease           |
//! | ET      | randomized-threshold trees                 | impurity decrease           |
//! | RF      | bootstrap + feature subsampling            | impurity decrease           |
//! | XGB     | second-order boosting, softmax             | total gain                  |
//!
//! Linear and kernel models standardize features internally with statistics
//! from the training rows only; trees use raw features.

mod boost;
mod forest;
mod kernel;
mod linear;
mod params;
mod permutation;
mod scale;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use boost::{cross_entropy, BoostedModel};
pub use forest::Forest;
pub use kernel::{median_pairwise_distance, KernelModel};
pub use linear::{train_hinge, train_logistic, LinearModel, LinearObjective, Loss};
pub use params::{HyperParams, MaxFeatures, ModelKind, ParamOverrides};
pub use permutation::permutation_importance;
pub use scale::Standardizer;

use crate::data::{LabeledDataset, MixtureLabel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelBody {
    Linear(LinearModel),
    Kernel(KernelModel),
    Forest(Forest),
    Boosted(BoostedModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub params: HyperParams,
    pub sensor_ids: Vec<String>,
    pub classes: Vec<MixtureLabel>,
    pub importance: Vec<f64>,
    /// False when an iterative solver hit its iteration cap before its tolerance.
    pub converged: bool,
    pub body: ModelBody,
}

pub(crate) fn normalize_or_uniform(v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().filter(|x| x.is_finite() && **x > 0.0).sum();
    if total > 0.0 {
        v.into_iter()
            .map(|x| if x.is_finite() && x > 0.0 { x / total } else { 0.0 })
            .collect()
    } else {
        let n = v.len().max(1) as f64;
        vec![1.0 / n; v.len()]
    }
}

pub fn fit(kind: ModelKind, params: &HyperParams, train: &LabeledDataset) -> Result<TrainedModel> {
    params.validate(kind)?;
    if train.rows() == 0 {
        return Err(Error::DegenerateData("empty training set".into()));
    }
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "training set has a single class ({})",
            classes[0]
        )));
    }
    let y: Vec<usize> = train
        .labels()
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class list"))
        .collect();
    let x = train.features();
    let k = classes.len();

    let (body, raw_importance, converged) = match kind {
        ModelKind::Lr | ModelKind::En | ModelKind::LinearSvc => {
            let loss = if kind == ModelKind::LinearSvc { Loss::Hinge } else { Loss::Logistic };
            let (m, ok) = LinearModel::fit(loss, x, &y, k, params);
            let imp = m.coefficient_magnitude();
            (ModelBody::Linear(m), Some(imp), ok)
        }
        ModelKind::RbfSvc => {
            let (m, ok) = KernelModel::fit(x, &y, k, params);
            (ModelBody::Kernel(m), None, ok)
        }
        ModelKind::Dt => {
            let (m, imp) = Forest::fit(x, &y, k, params, 1, false);
            (ModelBody::Forest(m), Some(imp), true)
        }
        ModelKind::Et | ModelKind::Rf => {
            let (m, imp) = Forest::fit(x, &y, k, params, params.n_trees, kind == ModelKind::Et);
            (ModelBody::Forest(m), Some(imp), true)
        }
        ModelKind::Xgb => {
            let (m, gain) = BoostedModel::fit(x, &y, k, params);
            (ModelBody::Boosted(m), Some(gain), true)
        }
    };

    let mut model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        params: params.clone(),
        sensor_ids: train.sensor_ids().to_vec(),
        classes,
        importance: Vec::new(),
        converged,
        body,
    };
    model.importance = match raw_importance {
        Some(v) => normalize_or_uniform(v),
        None => permutation_importance(
            &model,
            train,
            params.permutation_repeats,
            seed::derive(params.seed, "permutation"),
        )?,
    };
    Ok(model)
}

impl TrainedModel {
    pub fn n_sensors(&self) -> usize {
        self.sensor_ids.len()
    }

    /// Class index per row.
    pub fn predict_indices(&self, features: &Matrix) -> Result<Vec<usize>> {
        if features.cols() != self.n_sensors() {
            return Err(Error::shape("prediction features", self.n_sensors(), features.cols()));
        }
        let argmax = |s: Vec<f64>| {
            let mut best = 0;
            for (i, v) in s.iter().enumerate() {
                if *v > s[best] {
                    best = i;
                }
            }
            best
        };
        Ok(features
            .iter_rows()
            .map(|row| match &self.body {
                ModelBody::Linear(m) => argmax(m.decision(row)),
                ModelBody::Kernel(m) => argmax(m.decision(row)),
                ModelBody::Forest(m) => m.predict_row(row),
                ModelBody::Boosted(m) => argmax(m.raw_scores(row)),
            })
            .collect())
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<MixtureLabel>> {
        Ok(self
            .predict_indices(features)?
            .into_iter()
            .map(|i| self.classes[i])
            .collect())
    }

    pub fn feature_importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Version(header.format_version));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Same as [`TrainedModel::predict`].
pub fn predict(model: &TrainedModel, features: &Matrix) -> Result<Vec<MixtureLabel>> {
    model.predict(features)
}

/// Same as [`TrainedModel::feature_importance`].
pub fn feature_importance(model: &TrainedModel) -> Vec<f64> {
    model.importance.clone()
}

/// Which kinds to train and how: per-kind overrides on top of the defaults,
/// plus the train fraction used for every repeated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZooConfig {
    pub kinds: Vec<ModelKind>,
    pub train_fraction: f64,
    pub overrides: std::collections::BTreeMap<ModelKind, ParamOverrides>,
}

impl Default for ZooConfig {
    fn default() -> Self {
        ZooConfig {
            kinds: ModelKind::ALL.to_vec(),
            train_fraction: 0.8,
            overrides: Default::default(),
        }
    }
}

impl ZooConfig {
    pub fn params_for(&self, kind: ModelKind, seed: u64) -> HyperParams {
        let base = HyperParams::defaults(kind);
        let p = match self.overrides.get(&kind) {
            Some(o) => o.apply(base),
            None => base,
        };
        p.with_seed(seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::param("kinds", "at least one model kind is required"));
        }
        crate::data::SplitSpec { train_fraction: self.train_fraction, seed: 0 }.validate()?;
        for &k in &self.kinds {
            self.params_for(k, 0).validate(k)?;
        }
        Ok(())
    }
}
