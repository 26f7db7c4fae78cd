//! Model kinds and hyperparameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "L-SVC")]
    LinearSvc,
    #[serde(rename = "RBF-SVC")]
    RbfSvc,
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "ET")]
    Et,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "XGB")]
    Xgb,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Lr,
        ModelKind::En,
        ModelKind::LinearSvc,
        ModelKind::RbfSvc,
        ModelKind::Dt,
        ModelKind::Et,
        ModelKind::Rf,
        ModelKind::Xgb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "LR",
            ModelKind::En => "EN",
            ModelKind::LinearSvc => "L-SVC",
            ModelKind::RbfSvc => "RBF-SVC",
            ModelKind::Dt => "DT",
            ModelKind::Et => "ET",
            ModelKind::Rf => "RF",
            ModelKind::Xgb => "XGB",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, ModelKind::Dt | ModelKind::Et | ModelKind::Rf | ModelKind::Xgb)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().replace('-', "") == norm)
            .ok_or_else(|| Error::param("model kind", format!("unknown kind `{s}`")))
    }
}

/// Candidate features per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::Count(k) => k.min(n_features).max(1),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(MaxFeatures::All),
            "sqrt" => Ok(MaxFeatures::Sqrt),
            _ => s
                .parse::<usize>()
                .map(MaxFeatures::Count)
                .map_err(|_| Error::param("max_features", format!("`{s}` is not all, sqrt or a count"))),
        }
    }
}

/// Hyperparameters for every kind. Fields a kind does not use are carried
/// along and ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Trees in RF/ET, boosting rounds in XGB.
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    /// Shrinkage for XGB; initial subgradient step for L-SVC.
    pub learning_rate: f64,
    /// L2 penalty on XGB leaf weights.
    pub reg_lambda: f64,
    pub min_child_weight: f64,
    /// Gradient iterations (LR/EN/L-SVC) or dual passes (RBF-SVC).
    pub iterations: usize,
    pub tolerance: f64,
    pub l1: f64,
    pub l2: f64,
    pub svm_c: f64,
    /// RBF kernel width; `None` uses the median pairwise distance.
    pub rbf_width: Option<f64>,
    pub permutation_repeats: usize,
    pub seed: u64,
}

impl HyperParams {
    pub fn defaults(kind: ModelKind) -> Self {
        let base = HyperParams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
            bootstrap: false,
            learning_rate: 0.5,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
            iterations: 200,
            tolerance: 1e-4,
            l1: 0.0,
            l2: 0.0,
            svm_c: 1.0,
            rbf_width: None,
            permutation_repeats: 5,
            seed: 0,
        };
        match kind {
            ModelKind::Lr => base,
            ModelKind::En => HyperParams { l1: 0.01, l2: 0.01, ..base },
            ModelKind::LinearSvc => HyperParams { l2: 0.01, ..base },
            ModelKind::RbfSvc => HyperParams { tolerance: 1e-3, ..base },
            ModelKind::Dt => HyperParams { n_trees: 1, ..base },
            ModelKind::Et => HyperParams { max_features: MaxFeatures::Sqrt, ..base },
            ModelKind::Rf => HyperParams {
                max_features: MaxFeatures::Sqrt,
                bootstrap: true,
                ..base
            },
            ModelKind::Xgb => HyperParams {
                max_depth: Some(6),
                learning_rate: 0.3,
                ..base
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} must be finite and >= 0")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} must be finite and > 0")))
            }
        };
        match kind {
            ModelKind::Lr | ModelKind::En | ModelKind::LinearSvc => {
                finite_nonneg("l1", self.l1)?;
                finite_nonneg("l2", self.l2)?;
                positive("tolerance", self.tolerance)?;
                if kind == ModelKind::LinearSvc {
                    positive("learning_rate", self.learning_rate)?;
                }
                if self.iterations == 0 {
                    return Err(Error::param("iterations", "must be at least 1"));
                }
            }
            ModelKind::RbfSvc => {
                positive("svm_c", self.svm_c)?;
                positive("tolerance", self.tolerance)?;
                if let Some(w) = self.rbf_width {
                    positive("rbf_width", w)?;
                }
                if self.iterations == 0 {
                    return Err(Error::param("iterations", "must be at least 1"));
                }
                if self.permutation_repeats == 0 {
                    return Err(Error::param("permutation_repeats", "must be at least 1"));
                }
            }
            ModelKind::Dt | ModelKind::Et | ModelKind::Rf | ModelKind::Xgb => {
                if self.n_trees == 0 {
                    return Err(Error::param("n_trees", "must be at least 1"));
                }
                if self.max_depth == Some(0) {
                    return Err(Error::param("max_depth", "must be at least 1"));
                }
                if self.min_samples_split < 2 {
                    return Err(Error::param("min_samples_split", "must be at least 2"));
                }
                if self.max_features == MaxFeatures::Count(0) {
                    return Err(Error::param("max_features", "must be at least 1"));
                }
                if kind == ModelKind::Xgb {
                    if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
                        return Err(Error::param(
                            "learning_rate",
                            format!("{} is outside (0, 1]", self.learning_rate),
                        ));
                    }
                    finite_nonneg("reg_lambda", self.reg_lambda)?;
                    finite_nonneg("min_child_weight", self.min_child_weight)?;
                }
            }
        }
        Ok(())
    }
}

/// Partial hyperparameters layered over a kind's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trees: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_samples_split: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_features: Option<MaxFeatures>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_child_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svm_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rbf_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutation_repeats: Option<usize>,
}

impl ParamOverrides {
    pub fn apply(&self, mut p: HyperParams) -> HyperParams {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        take!(
            n_trees,
            min_samples_split,
            max_features,
            bootstrap,
            learning_rate,
            reg_lambda,
            min_child_weight,
            iterations,
            tolerance,
            l1,
            l2,
            svm_c,
            permutation_repeats
        );
        if let Some(d) = self.max_depth {
            p.max_depth = (d > 0).then_some(d);
        }
        if self.rbf_width.is_some() {
            p.rbf_width = self.rbf_width;
        }
        p
    }

    /// Sets one field from text, e.g. `("n_trees", "50")`. A `max_depth` of 0
    /// means unbounded.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::param(key, format!("cannot parse `{v}`")))
        }
        match key {
            "n_trees" => self.n_trees = Some(num(key, value)?),
            "max_depth" => self.max_depth = Some(num(key, value)?),
            "min_samples_split" => self.min_samples_split = Some(num(key, value)?),
            "max_features" => self.max_features = Some(value.parse()?),
            "bootstrap" => self.bootstrap = Some(num(key, value)?),
            "learning_rate" => self.learning_rate = Some(num(key, value)?),
            "reg_lambda" => self.reg_lambda = Some(num(key, value)?),
            "min_child_weight" => self.min_child_weight = Some(num(key, value)?),
            "iterations" => self.iterations = Some(num(key, value)?),
            "tolerance" => self.tolerance = Some(num(key, value)?),
            "l1" => self.l1 = Some(num(key, value)?),
            "l2" => self.l2 = Some(num(key, value)?),
            "svm_c" => self.svm_c = Some(num(key, value)?),
            "rbf_width" => self.rbf_width = Some(num(key, value)?),
            "permutation_repeats" => self.permutation_repeats = Some(num(key, value)?),
            _ => return Err(Error::param(key, "unknown hyperparameter")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_kinds_round_trip_names() {
        assert_eq!(ModelKind::ALL.len(), 8);
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            HyperParams::defaults(k).validate(k).unwrap();
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert_eq!("rbfsvc".parse::<ModelKind>().unwrap(), ModelKind::RbfSvc);
        assert!("MLP".parse::<ModelKind>().is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        let mut p = HyperParams::defaults(ModelKind::Xgb);
        p.learning_rate = 1.5;
        assert!(p.validate(ModelKind::Xgb).is_err());
        let mut p = HyperParams::defaults(ModelKind::En);
        p.l1 = -1.0;
        assert!(p.validate(ModelKind::En).is_err());
        let mut p = HyperParams::defaults(ModelKind::Rf);
        p.n_trees = 0;
        assert!(p.validate(ModelKind::Rf).is_err());
        let mut p = HyperParams::defaults(ModelKind::RbfSvc);
        p.rbf_width = Some(0.0);
        assert!(p.validate(ModelKind::RbfSvc).is_err());
    }

    #[test]
    fn overrides_layer_over_defaults() {
        let mut o = ParamOverrides::default();
        o.set("n_trees", "7").unwrap();
        o.set("max_depth", "0").unwrap();
        o.set("max_features", "3").unwrap();
        assert!(o.set("bogus", "1").is_err());
        assert!(o.set("l1", "x").is_err());
        let p = o.apply(HyperParams::defaults(ModelKind::Xgb));
        assert_eq!(p.n_trees, 7);
        assert_eq!(p.max_depth, None);
        assert_eq!(p.max_features, MaxFeatures::Count(3));
        assert_eq!(p.learning_rate, 0.3);
    }
}
