//! Labeled sensor-array datasets and their CSV form.
//!
//! The CSV layout is a header row with the six concentration columns
//! `B,T,E,X,N,I` (µg/L) followed by one column per sensor holding the maximum
//! relative resistance change. Exports append a trailing `label` column; the
//! loader ignores it and always re-derives labels from concentrations.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::label::{AnalyteCode, MixtureLabel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    sensor_ids: Vec<String>,
    features: Matrix,
    labels: Vec<MixtureLabel>,
    concentrations: Option<Matrix>,
}

impl LabeledDataset {
    pub fn new(
        sensor_ids: Vec<String>,
        features: Matrix,
        labels: Vec<MixtureLabel>,
        concentrations: Option<Matrix>,
    ) -> Result<Self> {
        if features.cols() != sensor_ids.len() {
            return Err(Error::shape("dataset sensor columns", sensor_ids.len(), features.cols()));
        }
        if labels.len() != features.rows() {
            return Err(Error::shape("dataset labels", features.rows(), labels.len()));
        }
        if let Some(c) = &concentrations {
            if c.rows() != features.rows() {
                return Err(Error::shape("dataset concentration rows", features.rows(), c.rows()));
            }
            if c.cols() != AnalyteCode::ALL.len() {
                return Err(Error::shape("dataset concentration columns", 6, c.cols()));
            }
        }
        if !features.all_finite() {
            return Err(Error::DegenerateData("non-finite feature value".into()));
        }
        Ok(LabeledDataset {
            sensor_ids,
            features,
            labels,
            concentrations,
        })
    }

    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_ids.len()
    }

    pub fn sensor_ids(&self) -> &[String] {
        &self.sensor_ids
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[MixtureLabel] {
        &self.labels
    }

    pub fn concentrations(&self) -> Option<&Matrix> {
        self.concentrations.as_ref()
    }

    pub fn sensor_index(&self, id: &str) -> Option<usize> {
        self.sensor_ids.iter().position(|s| s == id)
    }

    pub fn class_counts(&self) -> BTreeMap<MixtureLabel, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    pub fn classes(&self) -> Vec<MixtureLabel> {
        self.class_counts().into_keys().collect()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            sensor_ids: self.sensor_ids.clone(),
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            concentrations: self.concentrations.as_ref().map(|c| c.select_rows(idx)),
        }
    }

    /// Keeps only the named sensors, in the given order.
    pub fn project(&self, sensors: &[String]) -> Result<LabeledDataset> {
        let idx = sensors
            .iter()
            .map(|s| {
                self.sensor_index(s)
                    .ok_or_else(|| Error::param("active sensors", format!("unknown sensor `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset {
            sensor_ids: sensors.to_vec(),
            features: self.features.select_columns(&idx),
            labels: self.labels.clone(),
            concentrations: self.concentrations.clone(),
        })
    }

    /// Replaces one sensor column; used for perturbation checks.
    pub fn with_column(&self, sensor: usize, values: &[f64]) -> Result<LabeledDataset> {
        if values.len() != self.rows() {
            return Err(Error::shape("replacement column", self.rows(), values.len()));
        }
        let mut out = self.clone();
        for (r, v) in values.iter().enumerate() {
            out.features.set(r, sensor, *v);
        }
        if !out.features.all_finite() {
            return Err(Error::DegenerateData("non-finite feature value".into()));
        }
        Ok(out)
    }
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Header names of the B, T, E, X, N, I concentration columns.
    pub concentration_columns: [String; 6],
    /// Sensor columns to read. `None` takes every remaining column except `label`.
    pub sensor_columns: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            concentration_columns: AnalyteCode::ALL.map(|c| c.letter().to_string()),
            sensor_columns: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
    };

    let conc_idx = schema
        .concentration_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let sensor_ids: Vec<String> = match &schema.sensor_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, h)| !conc_idx.contains(i) && h.as_str() != LABEL_COLUMN)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if sensor_ids.is_empty() {
        return Err(Error::MissingColumn {
            column: "<sensor response columns>".into(),
        });
    }
    let sensor_idx = sensor_ids
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut feats = Vec::new();
    let mut concs = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: headers[col].clone(),
                    value: raw.to_string(),
                })
        };
        let mut conc = [0.0; 6];
        for (k, &c) in conc_idx.iter().enumerate() {
            conc[k] = cell(c)?;
        }
        for &s in &sensor_idx {
            feats.push(cell(s)?);
        }
        labels.push(MixtureLabel::from_concentrations(&conc));
        concs.extend_from_slice(&conc);
    }
    let rows = labels.len();
    LabeledDataset::new(
        sensor_ids.clone(),
        Matrix::from_vec(rows, sensor_ids.len(), feats)?,
        labels,
        Some(Matrix::from_vec(rows, 6, concs)?),
    )
}

/// Writes the dataset in the loader's schema plus a trailing `label` column.
/// Without stored concentrations, presence indicators (1/0) are written so the
/// file reloads to the same labels.
pub fn write_csv<W: Write>(ds: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = AnalyteCode::ALL.iter().map(|c| c.letter().to_string()).collect();
    header.extend(ds.sensor_ids.iter().cloned());
    header.push(LABEL_COLUMN.to_string());
    w.write_record(&header)?;
    for r in 0..ds.rows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        match &ds.concentrations {
            Some(c) => rec.extend(c.row(r).iter().map(|v| v.to_string())),
            None => rec.extend(AnalyteCode::ALL.iter().map(|&a| {
                if ds.labels[r].contains(a) { "1" } else { "0" }.to_string()
            })),
        }
        rec.extend(ds.features.row(r).iter().map(|v| v.to_string()));
        rec.push(ds.labels[r].canonical());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header17() -> String {
        let sensors: Vec<String> = (1..=17).map(|i| format!("S{i}")).collect();
        format!("B,T,E,X,N,I,{}", sensors.join(","))
    }

    fn responses(v: f64) -> String {
        vec![v.to_string(); 17].join(",")
    }

    #[test]
    fn single_analyte_row() {
        let text = format!("{}\n120,0,0,0,0,0,{}\n", header17(), responses(0.25));
        let ds = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.rows(), 1);
        assert_eq!(ds.n_sensors(), 17);
        assert_eq!(ds.labels()[0].canonical(), "B");
        assert_eq!(ds.sensor_ids()[16], "S17");
    }

    #[test]
    fn blank_sample_is_none() {
        let text = format!("{}\n0,0,0,0,0,0,{}\n", header17(), responses(0.0));
        let ds = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.labels()[0], MixtureLabel::NONE);
    }

    #[test]
    fn column_order_does_not_change_labels() {
        let text = "S1,I,N,X,E,T,B\n0.1,5,0,7,0,0,3\n";
        let ds = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.labels()[0].canonical(), "BXI");
        assert_eq!(ds.sensor_ids(), ["S1"]);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "B,T,E,X,I,S1\n0,0,0,0,0,1\n";
        match read_csv(text.as_bytes(), &CsvSchema::default()) {
            Err(Error::MissingColumn { column }) => assert_eq!(column, "N"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let text = "B,T,E,X,N,I,S1\n0,0,0,0,0,0,1\n0,0,0,0,0,0,abc\n";
        match read_csv(text.as_bytes(), &CsvSchema::default()) {
            Err(Error::Parse { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (1, "S1", "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_cell_rejected() {
        let text = "B,T,E,X,N,I,S1\n0,0,0,0,0,0,NaN\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvSchema::default()),
            Err(Error::Parse { row: 0, .. })
        ));
    }

    #[test]
    fn export_reloads_identically() {
        let text = "B,T,E,X,N,I,S1,S2\n50,0,0,0,0,0,0.5,0.25\n0,0,0,70,0,80,1.5,-0.125\n";
        let ds = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let out = String::from_utf8(buf.clone()).unwrap();
        assert!(out.starts_with("B,T,E,X,N,I,S1,S2,label\n"));
        assert!(out.contains(",XI\n"));
        let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn explicit_sensor_subset() {
        let text = "B,T,E,X,N,I,S1,S2,S3\n1,0,0,0,0,0,1,2,3\n";
        let schema = CsvSchema {
            sensor_columns: Some(vec!["S3".into(), "S1".into()]),
            ..CsvSchema::default()
        };
        let ds = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(ds.features().row(0), [3.0, 1.0]);
    }
}
