//! Sensor-array data: labels, CSV ingestion, stratified splitting and
//! synthetic arrays with planted ground truth.

mod dataset;
mod label;
mod split;
mod synth;

pub use dataset::{load_csv, read_csv, save_csv, write_csv, CsvSchema, LabeledDataset, LABEL_COLUMN};
pub use label::{AnalyteCode, MixtureLabel};
pub use split::{stratified_indices, stratified_split, SplitSpec};
pub use synth::{
    perfect_measurement, synth_dataset, synth_measure, synth_sensitivity, Measurement, PlantedData,
    PlantedDesign, SampleMatrix, SensitivityMatrix, ZERO_TOLERANCE,
};
