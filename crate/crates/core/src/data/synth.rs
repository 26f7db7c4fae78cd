//! Synthetic sensor arrays from the linear measurement model.
//!
//! A sensor array is a sparse nonnegative sensitivity matrix `D` (sensors x
//! analytes). A sample is a diagonal matrix of analyte amounts `X`. One
//! exposure gives the response `M = D X`, and each sensor reads out the row
//! sum of its response plus optional Gaussian noise.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::label::{AnalyteCode, MixtureLabel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Entries whose magnitude is at or below this count as zero.
pub const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    entries: Matrix,
    mask: Vec<bool>,
}

impl SensitivityMatrix {
    /// Builds from explicit entries; the mask marks the nonzero ones.
    pub fn from_entries(entries: Matrix) -> Result<Self> {
        if entries.as_slice().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("sensitivity", "entries must be finite and nonnegative"));
        }
        let mask = entries.as_slice().iter().map(|v| *v > ZERO_TOLERANCE).collect();
        Ok(SensitivityMatrix { entries, mask })
    }

    /// Draws uniform(0.5, 1.5) magnitudes for every `true` cell of `mask`.
    pub fn from_mask(mask: &[Vec<bool>], seed: u64) -> Result<Self> {
        let n = mask.len();
        let m = mask.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::param("mask", "needs at least one sensor and one analyte"));
        }
        let mut rng = seed::rng(seed);
        let mut entries = Matrix::zeros(n, m);
        for (i, row) in mask.iter().enumerate() {
            if row.len() != m {
                return Err(Error::shape("sensitivity mask row", m, row.len()));
            }
            for (j, &on) in row.iter().enumerate() {
                if on {
                    entries.set(i, j, rng.random_range(0.5..1.5));
                }
            }
        }
        Ok(SensitivityMatrix {
            entries,
            mask: mask.iter().flatten().copied().collect(),
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.entries.rows()
    }

    pub fn n_analytes(&self) -> usize {
        self.entries.cols()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn is_nonzero(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n_analytes() + j]
    }

    pub fn nonzero_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&b| b).count() as f64 / self.mask.len() as f64
    }

    /// Fraction of analytes the sensor responds to.
    pub fn sensor_capability(&self, i: usize) -> f64 {
        (0..self.n_analytes()).filter(|&j| self.is_nonzero(i, j)).count() as f64 / self.n_analytes() as f64
    }
}

/// Diagonal sample matrix, stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    diagonal: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(diagonal: Vec<f64>) -> Result<Self> {
        if diagonal.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("sample", "analyte amounts must be finite and nonnegative"));
        }
        Ok(SampleMatrix { diagonal })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        SampleMatrix::new(self.diagonal.iter().map(|v| v * alpha).collect())
    }

    /// Label of the analytes present (m must not exceed six).
    pub fn label(&self) -> Result<MixtureLabel> {
        if self.diagonal.len() > 6 {
            return Err(Error::param("sample", "labels cover at most six analytes"));
        }
        let mut conc = [0.0; 6];
        conc[..self.diagonal.len()].copy_from_slice(&self.diagonal);
        Ok(MixtureLabel::from_concentrations(&conc))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub response: Matrix,
    pub readouts: Vec<f64>,
}

pub fn synth_sensitivity(n: usize, m: usize, density: f64, seed: u64) -> Result<SensitivityMatrix> {
    if n == 0 || m == 0 {
        return Err(Error::param("n/m", "sensor and analyte counts must be at least 1"));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::param("density", format!("{density} is outside (0, 1]")));
    }
    let mut rng = seed::rng(seed);
    let mask: Vec<Vec<bool>> = (0..n)
        .map(|_| (0..m).map(|_| rng.random::<f64>() < density).collect())
        .collect();
    SensitivityMatrix::from_mask(&mask, seed::derive(seed, "magnitudes"))
}

pub fn synth_measure(d: &SensitivityMatrix, x: &SampleMatrix, noise_sd: f64, seed: u64) -> Result<Measurement> {
    if x.diagonal.len() != d.n_analytes() {
        return Err(Error::shape("sample vs sensitivity", d.n_analytes(), x.diagonal.len()));
    }
    let noise = noise_dist(noise_sd)?;
    let mut rng = seed::rng(seed);
    let (n, m) = (d.n_sensors(), d.n_analytes());
    let mut response = Matrix::zeros(n, m);
    let mut readouts = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..m {
            let v = d.entries.get(i, j) * x.diagonal[j];
            response.set(i, j, v);
            sum += v;
        }
        if let Some(dist) = &noise {
            sum += dist.sample(&mut rng);
        }
        readouts.push(sum);
    }
    Ok(Measurement { response, readouts })
}

fn noise_dist(noise_sd: f64) -> Result<Option<Normal<f64>>> {
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::param("noise_sd", format!("{noise_sd} must be finite and >= 0")));
    }
    Ok((noise_sd > 0.0).then(|| Normal::new(0.0, noise_sd).expect("valid sd")))
}

/// One row per (mixture, repeat), mixtures in input order. Sensors are named `S1..Sn`.
pub fn synth_dataset(
    d: &SensitivityMatrix,
    mixtures: &[(MixtureLabel, SampleMatrix)],
    repeats: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if mixtures.is_empty() {
        return Err(Error::param("mixtures", "at least one mixture is required"));
    }
    if repeats == 0 {
        return Err(Error::param("repeats", "must be at least 1"));
    }
    let n = d.n_sensors();
    let with_conc = d.n_analytes() == AnalyteCode::ALL.len();
    let mut feats = Vec::with_capacity(mixtures.len() * repeats * n);
    let mut concs = Vec::new();
    let mut labels = Vec::new();
    let mut row = 0u64;
    for (label, sample) in mixtures {
        for _ in 0..repeats {
            let meas = synth_measure(d, sample, noise_sd, seed::derive_index(seed, row))?;
            feats.extend_from_slice(&meas.readouts);
            if with_conc {
                concs.extend_from_slice(sample.diagonal());
            }
            labels.push(*label);
            row += 1;
        }
    }
    let rows = labels.len();
    LabeledDataset::new(
        (1..=n).map(|i| format!("S{i}")).collect(),
        Matrix::from_vec(rows, n, feats)?,
        labels,
        if with_conc { Some(Matrix::from_vec(rows, 6, concs)?) } else { None },
    )
}

/// Whether the first `k` sensors jointly respond to every analyte: each column
/// of the top `k` rows of the response has a nonzero sum.
pub fn perfect_measurement(meas: &Measurement, k: usize) -> Result<bool> {
    let n = meas.response.rows();
    if k == 0 || k > n {
        return Err(Error::param("k", format!("{k} is outside 1..={n}")));
    }
    Ok((0..meas.response.cols()).all(|j| {
        let col: f64 = (0..k).map(|i| meas.response.get(i, j)).sum();
        col.abs() > ZERO_TOLERANCE
    }))
}

/// Ground-truth design: a few informative sensors among dead (all-zero) ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedDesign {
    pub n_sensors: usize,
    pub informative: usize,
    pub n_analytes: usize,
    pub density: f64,
    pub mixtures: usize,
    pub repeats: usize,
    pub noise_sd: f64,
}

impl Default for PlantedDesign {
    fn default() -> Self {
        PlantedDesign {
            n_sensors: 17,
            informative: 5,
            n_analytes: 6,
            density: 0.62,
            mixtures: 20,
            repeats: 12,
            noise_sd: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedData {
    pub design: PlantedDesign,
    pub seed: u64,
    /// Informative sensor ids in ascending sensor order.
    pub informative_sensors: Vec<String>,
    pub sensitivity: SensitivityMatrix,
    pub mixtures: Vec<(MixtureLabel, SampleMatrix)>,
    #[serde(skip)]
    pub dataset: Option<LabeledDataset>,
}

impl PlantedDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n_sensors == 0 {
            return Err(Error::param("sensors", "must be at least 1"));
        }
        if self.informative == 0 || self.informative > self.n_sensors {
            return Err(Error::param(
                "informative",
                format!("{} is outside 1..={}", self.informative, self.n_sensors),
            ));
        }
        if self.n_analytes == 0 || self.n_analytes > 6 {
            return Err(Error::param("analytes", format!("{} is outside 1..=6", self.n_analytes)));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::param("density", format!("{} is outside (0, 1]", self.density)));
        }
        let available = (1usize << self.n_analytes) - 1;
        if self.mixtures == 0 || self.mixtures > available {
            return Err(Error::param(
                "mixtures",
                format!("{} is outside 1..={available}", self.mixtures),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::param("repeats", "must be at least 1"));
        }
        noise_dist(self.noise_sd).map_err(|_| Error::param("noise", "must be finite and >= 0"))?;
        Ok(())
    }

    /// Builds the planted sensitivity matrix, the mixture list and the dataset.
    ///
    /// Informative sensors are placed at random positions. Each gets a random
    /// sparse row with one forced entry so that every informative sensor and
    /// every analyte is covered. Dead sensors have all-zero rows, so their
    /// features are pure noise. Mixtures are distinct nonempty analyte subsets,
    /// singletons first, with amounts drawn from the reference concentration
    /// ranges.
    pub fn generate(&self, seed: u64) -> Result<PlantedData> {
        self.validate()?;
        let (n, m, k) = (self.n_sensors, self.n_analytes, self.informative);
        let mut rng = seed::rng(seed::derive(seed, "planted"));

        let mut positions: Vec<usize> = (0..n).collect();
        positions.shuffle(&mut rng);
        let mut informative: Vec<usize> = positions[..k].to_vec();
        informative.sort_unstable();

        let mut mask = vec![vec![false; m]; n];
        for (slot, &i) in informative.iter().enumerate() {
            for cell in mask[i].iter_mut() {
                *cell = rng.random::<f64>() < self.density;
            }
            mask[i][slot % m] = true;
        }
        for j in k..m {
            mask[informative[j % k]][j] = true;
        }
        let sensitivity = SensitivityMatrix::from_mask(&mask, seed::derive(seed, "magnitudes"))?;

        let mut subsets: Vec<u8> = (0..m).map(|j| 1u8 << j).collect();
        let mut rest: Vec<u8> = (1u8..(1u8 << m)).filter(|b| b.count_ones() > 1).collect();
        rest.shuffle(&mut rng);
        subsets.extend(rest);
        subsets.truncate(self.mixtures);

        let mut mixtures = Vec::with_capacity(subsets.len());
        for bits in subsets {
            let diag: Vec<f64> = (0..m)
                .map(|j| {
                    if bits & (1 << j) != 0 {
                        let (lo, hi) = AnalyteCode::ALL[j].concentration_range();
                        rng.random_range(lo..=hi)
                    } else {
                        0.0
                    }
                })
                .collect();
            let sample = SampleMatrix::new(diag)?;
            mixtures.push((sample.label()?, sample));
        }

        let dataset = synth_dataset(
            &sensitivity,
            &mixtures,
            self.repeats,
            self.noise_sd,
            seed::derive(seed, "exposures"),
        )?;
        Ok(PlantedData {
            design: self.clone(),
            seed,
            informative_sensors: informative.iter().map(|&i| dataset.sensor_ids()[i].clone()).collect(),
            sensitivity,
            mixtures,
            dataset: Some(dataset),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_density_is_dense() {
        let d = synth_sensitivity(5, 4, 1.0, 1).unwrap();
        assert_eq!(d.nonzero_fraction(), 1.0);
        assert!(d.entries().as_slice().iter().all(|&v| (0.5..1.5).contains(&v)));
    }

    #[test]
    fn identity_mask_is_diagonal() {
        let mask: Vec<Vec<bool>> = (0..6).map(|i| (0..6).map(|j| i == j).collect()).collect();
        let d = SensitivityMatrix::from_mask(&mask, 9).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(d.entries().get(i, j) != 0.0, i == j);
            }
        }
    }

    #[test]
    fn invalid_density() {
        for dens in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(
                synth_sensitivity(3, 3, dens, 0),
                Err(Error::Parameter { ref name, .. }) if name == "density"
            ));
        }
    }

    #[test]
    fn sensitivity_deterministic() {
        assert_eq!(synth_sensitivity(17, 6, 0.62, 5).unwrap(), synth_sensitivity(17, 6, 0.62, 5).unwrap());
        assert_ne!(synth_sensitivity(17, 6, 0.62, 5).unwrap(), synth_sensitivity(17, 6, 0.62, 6).unwrap());
    }

    #[test]
    fn density_concentrates() {
        // Binomial(102, 0.62) per matrix; the mean over 1000 draws has sd ~0.0015.
        let mean: f64 = (0..1000u64)
            .map(|s| synth_sensitivity(17, 6, 0.62, s).unwrap().nonzero_fraction())
            .sum::<f64>()
            / 1000.0;
        assert!((mean - 0.62).abs() < 0.03, "{mean}");
    }

    #[test]
    fn identity_readouts() {
        let d = SensitivityMatrix::from_entries(Matrix::identity(3)).unwrap();
        let x = SampleMatrix::new(vec![1.0, 2.0, 3.0]).unwrap();
        let m = synth_measure(&d, &x, 0.0, 0).unwrap();
        assert_eq!(m.readouts, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_sample_reads_zero() {
        let d = synth_sensitivity(4, 3, 0.7, 2).unwrap();
        let x = SampleMatrix::new(vec![0.0; 3]).unwrap();
        assert!(synth_measure(&d, &x, 0.0, 0).unwrap().readouts.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn readouts_match_brute_force_product() {
        let d = synth_sensitivity(4, 3, 0.6, 21).unwrap();
        let x = SampleMatrix::new(vec![0.7, 1.9, 3.1]).unwrap();
        let meas = synth_measure(&d, &x, 0.0, 0).unwrap();
        // full matrix product D * diag(X), then row sums
        let mut xm = Matrix::zeros(3, 3);
        for j in 0..3 {
            xm.set(j, j, x.diagonal()[j]);
        }
        for i in 0..4 {
            let mut row_sum = 0.0;
            for j in 0..3 {
                let mut mij = 0.0;
                for l in 0..3 {
                    mij += d.entries().get(i, l) * xm.get(l, j);
                }
                assert_eq!(meas.response.get(i, j), mij);
                row_sum += mij;
            }
            assert!((meas.readouts[i] - row_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let d = synth_sensitivity(4, 3, 0.6, 0).unwrap();
        let x = SampleMatrix::new(vec![1.0; 4]).unwrap();
        assert!(matches!(synth_measure(&d, &x, 0.0, 0), Err(Error::Shape { .. })));
    }

    fn mixtures66() -> Vec<(MixtureLabel, SampleMatrix)> {
        (0..66u32)
            .map(|i| {
                let bits = (i % 63 + 1) as u8;
                let diag = (0..6).map(|j| if bits & (1 << j) != 0 { 50.0 + i as f64 } else { 0.0 }).collect();
                let s = SampleMatrix::new(diag).unwrap();
                (s.label().unwrap(), s)
            })
            .collect()
    }

    #[test]
    fn dataset_row_count() {
        let d = synth_sensitivity(17, 6, 0.62, 0).unwrap();
        let ds = synth_dataset(&d, &mixtures66(), 12, 0.1, 0).unwrap();
        assert_eq!(ds.rows(), 792);
        assert_eq!(ds.n_sensors(), 17);
    }

    #[test]
    fn noiseless_repeats_duplicate() {
        let d = synth_sensitivity(5, 6, 0.62, 0).unwrap();
        let mix = &mixtures66()[..3];
        let ds = synth_dataset(&d, mix, 2, 0.0, 4).unwrap();
        for k in 0..3 {
            assert_eq!(ds.features().row(2 * k), ds.features().row(2 * k + 1));
            assert_eq!(ds.labels()[2 * k], mix[k].0);
        }
    }

    #[test]
    fn empty_mixture_list() {
        let d = synth_sensitivity(5, 6, 0.62, 0).unwrap();
        assert!(synth_dataset(&d, &[], 2, 0.0, 0).is_err());
        assert!(synth_dataset(&d, &mixtures66()[..1], 0, 0.0, 0).is_err());
    }

    #[test]
    fn planted_dead_sensors_are_noise() {
        let design = PlantedDesign { noise_sd: 1.0, ..PlantedDesign::default() };
        let planted = design.generate(17).unwrap();
        let ds = planted.dataset.as_ref().unwrap();
        assert_eq!(planted.informative_sensors.len(), 5);
        for (i, id) in ds.sensor_ids().iter().enumerate() {
            let col = ds.features().column(i);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            if planted.informative_sensors.contains(id) {
                assert!(mean > 20.0, "{id} mean {mean}");
            } else {
                assert!(planted.sensitivity.sensor_capability(i) == 0.0);
                // 144 N(0,1) draws: mean within ~4 standard errors, variance near 1
                assert!(mean.abs() < 0.35, "{id} mean {mean}");
                assert!((0.6..1.5).contains(&var), "{id} var {var}");
            }
        }
        // every analyte reaches some informative sensor
        for j in 0..6 {
            assert!((0..17).any(|i| planted.sensitivity.is_nonzero(i, j)));
        }
    }

    #[test]
    fn perfect_measurement_cases() {
        let d = SensitivityMatrix::from_entries(Matrix::identity(3)).unwrap();
        let x = SampleMatrix::new(vec![1.0, 1.0, 1.0]).unwrap();
        let m = synth_measure(&d, &x, 0.0, 0).unwrap();
        assert!(perfect_measurement(&m, 3).unwrap());
        assert!(!perfect_measurement(&m, 2).unwrap());
        assert!(perfect_measurement(&m, 0).is_err());
        assert!(perfect_measurement(&m, 4).is_err());

        let mut e = Matrix::zeros(3, 3);
        e.set(0, 0, 1.0);
        e.set(1, 1, 1.0);
        e.set(2, 0, 1.0);
        let d = SensitivityMatrix::from_entries(e).unwrap();
        let m = synth_measure(&d, &x, 0.0, 0).unwrap();
        for k in 1..=3 {
            assert!(!perfect_measurement(&m, k).unwrap());
        }
    }

    #[test]
    fn perfect_measurement_matches_exhaustive_check() {
        for s in 0..200u64 {
            let d = synth_sensitivity(8, 5, 0.25, s).unwrap();
            let x = SampleMatrix::new(vec![1.0, 2.0, 0.5, 3.0, 1.5]).unwrap();
            let meas = synth_measure(&d, &x, 0.0, 0).unwrap();
            for k in 1..=8 {
                let mut covered = [false; 5];
                for i in 0..k {
                    for (j, c) in covered.iter_mut().enumerate() {
                        *c |= d.is_nonzero(i, j);
                    }
                }
                assert_eq!(perfect_measurement(&meas, k).unwrap(), covered.iter().all(|&c| c));
            }
        }
    }

    proptest! {
        #[test]
        fn noiseless_measure_is_linear(seed in 0u64..500, alpha in 0.0f64..10.0) {
            let d = synth_sensitivity(6, 4, 0.5, seed).unwrap();
            let x = SampleMatrix::new(vec![1.0, 0.3, 2.5, 4.0]).unwrap();
            let base = synth_measure(&d, &x, 0.0, 0).unwrap().readouts;
            let scaled = synth_measure(&d, &x.scaled(alpha).unwrap(), 0.0, 0).unwrap().readouts;
            for (b, s) in base.iter().zip(&scaled) {
                prop_assert!((alpha * b - s).abs() <= 1e-12 * (1.0 + s.abs()));
            }
        }

        #[test]
        fn perfect_measurement_monotone(seed in 0u64..1000) {
            let d = synth_sensitivity(10, 6, 0.2, seed).unwrap();
            let x = SampleMatrix::new(vec![1.0; 6]).unwrap();
            let meas = synth_measure(&d, &x, 0.0, 0).unwrap();
            let flags: Vec<bool> = (1..=10).map(|k| perfect_measurement(&meas, k).unwrap()).collect();
            for w in flags.windows(2) {
                prop_assert!(!w[0] || w[1]);
            }
        }
    }
}
