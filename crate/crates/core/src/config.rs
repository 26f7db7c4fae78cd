//! Run configuration: one TOML document drives a full pipeline run.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! path = "readouts.csv"     # omit to synthesize a planted design instead
//!
//! [committee]
//! admission_threshold = 0.7
//!
//! [zoo.overrides.XGB]
//! n_trees = 50
//!
//! [modes]
//! sizes = [5, 3, 1]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::committee::CommitteePolicy;
use crate::data::{load_csv, CsvSchema, LabeledDataset, PlantedData, PlantedDesign};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ZooConfig};
use crate::theory::{CapabilityModel, CurveSpec};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV to load. Relative paths resolve against the config file's directory.
    pub path: Option<PathBuf>,
    pub schema: Option<CsvSchema>,
    /// Used when `path` is absent.
    pub planted: PlantedDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub readout: ModelKind,
    /// Per-sensor power draw in dataset sensor order; equal draw when absent.
    pub power: Option<Vec<f64>>,
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig {
            sizes: vec![5, 3, 1],
            repeats: 5,
            readout: ModelKind::Xgb,
            power: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub capability: CapabilityModel,
    /// Curve length; `None` uses the dataset's sensor count.
    pub n_max: Option<usize>,
    pub trials: usize,
    pub estimator: crate::theory::Estimator,
    pub mu_sweep: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            capability: CapabilityModel::default(),
            n_max: None,
            trials: 500,
            estimator: Default::default(),
            mu_sweep: vec![0.4, 0.62, 0.8, 1.0],
            targets: vec![0.9],
        }
    }
}

impl TheoryConfig {
    pub fn curve_spec(&self, n_sensors: usize) -> CurveSpec {
        CurveSpec {
            n_max: self.n_max.unwrap_or(n_sensors),
            trials: self.trials,
            estimator: self.estimator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub zoo: ZooConfig,
    pub committee: CommitteePolicy,
    pub modes: ModesConfig,
    pub theory: TheoryConfig,
}

/// Where the dataset came from; planted runs keep their ground truth.
#[derive(Debug, Clone)]
pub enum LoadedData {
    Csv(LabeledDataset),
    Planted(PlantedData),
}

impl LoadedData {
    pub fn dataset(&self) -> &LabeledDataset {
        match self {
            LoadedData::Csv(d) => d,
            LoadedData::Planted(p) => p.dataset.as_ref().expect("planted data carries its dataset"),
        }
    }

    pub fn planted(&self) -> Option<&PlantedData> {
        match self {
            LoadedData::Planted(p) => Some(p),
            LoadedData::Csv(_) => None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves a relative data path against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.zoo.validate()?;
        if self.modes.repeats == 0 {
            return Err(Error::param("modes.repeats", "must be at least 1"));
        }
        if self.theory.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        self.theory.capability.validate()?;
        for &mu in &self.theory.mu_sweep {
            self.theory.capability.with_mu(mu).validate()?;
        }
        if self.data.path.is_none() {
            self.data.planted.validate()?;
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<LoadedData> {
        match &self.data.path {
            Some(p) => Ok(LoadedData::Csv(load_csv(p, &self.data.schema.clone().unwrap_or_default())?)),
            None => Ok(LoadedData::Planted(self.data.planted.generate(self.seed)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig { seed: 42, ..Default::default() };
        cfg.zoo.overrides.entry(ModelKind::Xgb).or_default().n_trees = Some(30);
        cfg.modes.power = Some(vec![1.0; 17]);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_toml("seed = 3\n[committee]\nadmission_threshold = 0.5\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.committee.admission_threshold, 0.5);
        assert_eq!(cfg.modes.sizes, [5, 3, 1]);
        assert!(RunConfig::from_toml("sead = 3").is_err());
        let kinds = RunConfig::from_toml("[zoo.overrides.\"L-SVC\"]\nsvm_c = 2.0\n").unwrap();
        assert_eq!(kinds.zoo.overrides[&ModelKind::LinearSvc].svm_c, Some(2.0));
    }

    #[test]
    fn relative_data_path_follows_config() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        std::fs::write(&file, "[data]\npath = \"x.csv\"\n").unwrap();
        let cfg = RunConfig::load(&file).unwrap();
        assert_eq!(cfg.data.path.unwrap(), dir.path().join("x.csv"));
    }
}
