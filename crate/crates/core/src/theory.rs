//! Gaussian capability model, the closed-form coverage curve and sensor-count
//! bound, and a Monte Carlo simulator that cross-checks both.
//!
//! A sensor's capability is its per-analyte detection probability `p`, drawn
//! from a normal distribution and clipped to [0, 1]. With `n` independent
//! sensors at the mean probability, every one of `m` analytes is covered with
//! probability `[1 - (1 - p)^n]^m`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapabilityModel {
    /// Mean per-analyte detection probability.
    pub mu_frac: f64,
    /// Standard deviation of the per-sensor probability before clipping.
    pub sigma_frac: f64,
    /// Number of analytes.
    pub m: usize,
    /// Per-sensor tolerance; carried for reporting, `1 - epsilon` is the
    /// per-sensor capability it stands for.
    pub epsilon: f64,
}

impl Default for CapabilityModel {
    fn default() -> Self {
        CapabilityModel {
            mu_frac: 0.62,
            sigma_frac: 0.1,
            m: 6,
            epsilon: 0.05,
        }
    }
}

impl CapabilityModel {
    pub fn with_mu(self, mu_frac: f64) -> Self {
        CapabilityModel { mu_frac, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_frac > 0.0 && self.mu_frac <= 1.0) {
            return Err(Error::param("mu_frac", format!("{} is outside (0, 1]", self.mu_frac)));
        }
        if !(self.sigma_frac >= 0.0 && self.sigma_frac.is_finite()) {
            return Err(Error::param("sigma_frac", format!("{} is negative or non-finite", self.sigma_frac)));
        }
        if self.m == 0 {
            return Err(Error::param("m", "at least one analyte is required"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param("epsilon", format!("{} is outside (0, 1)", self.epsilon)));
        }
        Ok(())
    }
}

/// Probability that `n` sensors at the mean capability cover all analytes.
pub fn analytic_capability(n: usize, model: &CapabilityModel) -> f64 {
    let miss = (1.0 - model.mu_frac).clamp(0.0, 1.0).powi(n as i32);
    (1.0 - miss).powi(model.m as i32).clamp(0.0, 1.0)
}

/// Continuous sensor-count bound `ln(1 - C^(1/m)) / ln(1 - mu)`. Tends to 0 as
/// the required capability does.
pub fn sensor_bound(capability: f64, model: &CapabilityModel) -> Result<f64> {
    if !(capability > 0.0 && capability < 1.0) {
        return Err(Error::Domain(format!("capability {capability} must lie strictly between 0 and 1")));
    }
    if !(model.mu_frac > 0.0 && model.mu_frac < 1.0) {
        return Err(Error::Domain(format!(
            "mu_frac {} must lie strictly between 0 and 1 for the logarithmic bound",
            model.mu_frac
        )));
    }
    if model.m == 0 {
        return Err(Error::Domain("m must be at least 1".into()));
    }
    let per_analyte = capability.powf(1.0 / model.m as f64);
    if per_analyte >= 1.0 {
        return Err(Error::Domain(format!("capability {capability} rounds to 1 per analyte")));
    }
    Ok((-per_analyte).ln_1p() / (-model.mu_frac).ln_1p())
}

/// Smallest `n` with `analytic_capability(n) >= C`. The ceiling of the bound is
/// nudged by whole steps where rounding would break tightness on either side.
pub fn min_sensors(capability: f64, model: &CapabilityModel) -> Result<usize> {
    let bound = sensor_bound(capability, model)?;
    let mut n = bound.ceil().max(0.0) as usize;
    while analytic_capability(n, model) < capability {
        n += 1;
    }
    while n > 0 && analytic_capability(n - 1, model) >= capability {
        n -= 1;
    }
    Ok(n)
}

/// Per-trial statistic of the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// 1 when every analyte is detected by at least one sensor.
    #[default]
    AllAnalytes,
    /// Fraction of analytes detected by at least one sensor.
    DetectedFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Pairwise summation; the result does not depend on how trials were scheduled.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn trial(n: usize, model: &CapabilityModel, estimator: Estimator, seed: u64) -> f64 {
    let mut rng = seed::rng(seed);
    let probs: Vec<f64> = if model.sigma_frac > 0.0 {
        let normal = Normal::new(model.mu_frac, model.sigma_frac).expect("validated sigma");
        (0..n).map(|_| normal.sample(&mut rng).clamp(0.0, 1.0)).collect()
    } else {
        vec![model.mu_frac.clamp(0.0, 1.0); n]
    };
    let mut covered = 0usize;
    for _ in 0..model.m {
        // Draw every sensor so the stream layout is independent of outcomes.
        let mut hit = false;
        for &p in &probs {
            hit |= rng.random::<f64>() < p;
        }
        covered += hit as usize;
    }
    match estimator {
        Estimator::AllAnalytes => (covered == model.m) as u8 as f64,
        Estimator::DetectedFraction => covered as f64 / model.m as f64,
    }
}

/// Mean of `trials` simulated arrays of `n` sensors with a 95% normal
/// approximation interval. A single trial gives the uninformative [0, 1].
pub fn mc_capability(n: usize, model: &CapabilityModel, trials: usize, seed: u64, estimator: Estimator) -> Result<McEstimate> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| trial(n, model, estimator, seed::derive_index(seed, t as u64)))
        .collect();
    let mean = pairwise_sum(&values) / trials as f64;
    if trials == 1 {
        return Ok(McEstimate { mean, ci_low: 0.0, ci_high: 1.0 });
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let sd = (pairwise_sum(&sq) / (trials - 1) as f64).sqrt();
    let half = 1.96 * sd / (trials as f64).sqrt();
    Ok(McEstimate {
        mean,
        ci_low: (mean - half).max(0.0),
        ci_high: (mean + half).min(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSpec {
    pub n_max: usize,
    pub trials: usize,
    pub estimator: Estimator,
}

impl Default for CurveSpec {
    fn default() -> Self {
        CurveSpec {
            n_max: 17,
            trials: 500,
            estimator: Estimator::AllAnalytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCurve {
    pub model: CapabilityModel,
    pub estimator: Estimator,
    pub n_values: Vec<usize>,
    pub analytic: Vec<f64>,
    pub mc_mean: Vec<f64>,
    pub mc_ci_low: Vec<f64>,
    pub mc_ci_high: Vec<f64>,
    pub trials: usize,
}

impl TheoryCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "analytic", "mc_mean", "ci_low", "ci_high"])?;
        for i in 0..self.n_values.len() {
            w.write_record([
                self.n_values[i].to_string(),
                self.analytic[i].to_string(),
                self.mc_mean[i].to_string(),
                self.mc_ci_low[i].to_string(),
                self.mc_ci_high[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Analytic and simulated curves over `n = 1..=n_max`. Each `n` gets its own
/// derived seed so curves for different ranges agree where they overlap.
pub fn theory_curve(model: &CapabilityModel, spec: &CurveSpec, seed: u64) -> Result<TheoryCurve> {
    model.validate()?;
    if spec.n_max == 0 {
        return Err(Error::param("n_max", "must be at least 1"));
    }
    let n_values: Vec<usize> = (1..=spec.n_max).collect();
    let base = seed::derive(seed, "mc");
    let mc: Vec<McEstimate> = n_values
        .iter()
        .map(|&n| mc_capability(n, model, spec.trials, seed::derive_index(base, n as u64), spec.estimator))
        .collect::<Result<_>>()?;
    Ok(TheoryCurve {
        model: *model,
        estimator: spec.estimator,
        analytic: n_values.iter().map(|&n| analytic_capability(n, model)).collect(),
        mc_mean: mc.iter().map(|e| e.mean).collect(),
        mc_ci_low: mc.iter().map(|e| e.ci_low).collect(),
        mc_ci_high: mc.iter().map(|e| e.ci_high).collect(),
        n_values,
        trials: spec.trials,
    })
}

/// First `n` whose value reaches `target`.
pub fn crossing(n_values: &[usize], values: &[f64], target: f64) -> Option<usize> {
    n_values.iter().zip(values).find(|(_, &v)| v >= target).map(|(&n, _)| n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingVerdict {
    pub target: f64,
    pub analytic_n: Option<usize>,
    pub mc_n: Option<usize>,
    /// Both curves cross within one sensor of each other, or neither crosses.
    pub agrees: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenPoint {
    pub n: usize,
    pub capability: f64,
    pub analytic: f64,
    pub above_curve: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub curve: TheoryCurve,
    pub crossings: Vec<CrossingVerdict>,
    pub green_points: Vec<GreenPoint>,
    pub pass: bool,
}

pub fn crossing_verdict(curve: &TheoryCurve, target: f64) -> CrossingVerdict {
    let analytic_n = crossing(&curve.n_values, &curve.analytic, target);
    let mc_n = crossing(&curve.n_values, &curve.mc_mean, target);
    let agrees = match (analytic_n, mc_n) {
        (Some(a), Some(b)) => a.abs_diff(b) <= 1,
        (None, None) => true,
        _ => false,
    };
    CrossingVerdict { target, analytic_n, mc_n, agrees }
}

/// Builds the curves, checks crossing agreement at each target and places the
/// supplied green-mode points relative to the analytic curve.
pub fn validate_green_modes(
    green_ns: &[usize],
    capabilities: &[f64],
    model: &CapabilityModel,
    spec: &CurveSpec,
    targets: &[f64],
    seed: u64,
) -> Result<TheoryReport> {
    if green_ns.len() != capabilities.len() {
        return Err(Error::shape("green-mode points", green_ns.len(), capabilities.len()));
    }
    let curve = theory_curve(model, spec, seed)?;
    let crossings: Vec<CrossingVerdict> = targets.iter().map(|&t| crossing_verdict(&curve, t)).collect();
    let green_points = green_ns
        .iter()
        .zip(capabilities)
        .map(|(&n, &c)| {
            let analytic = analytic_capability(n, model);
            GreenPoint {
                n,
                capability: c,
                analytic,
                above_curve: c >= analytic,
            }
        })
        .collect();
    let pass = crossings.iter().all(|c| c.agrees);
    Ok(TheoryReport {
        curve,
        crossings,
        green_points,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(mu: f64, m: usize) -> CapabilityModel {
        CapabilityModel {
            mu_frac: mu,
            m,
            ..CapabilityModel::default()
        }
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(analytic_capability(0, &model(0.62, 6)), 0.0);
        assert_eq!(analytic_capability(4, &model(1.0, 6)), 1.0);
        let expect = (1.0 - 0.38f64.powi(5)).powi(6);
        assert!((analytic_capability(5, &model(0.62, 6)) - expect).abs() < 1e-15);
        // quoted as roughly 0.9535; the exact value is 0.95339...
        assert!((expect - 0.9535).abs() < 5e-4);
    }

    #[test]
    fn bound_examples() {
        let m = model(0.62, 6);
        let b = sensor_bound(0.95, &m).unwrap();
        assert!(b > 4.0 && b < 5.0, "{b}");
        assert_eq!(min_sensors(0.95, &m).unwrap(), 5);
        assert!(sensor_bound(1e-12, &m).unwrap() < 0.1);
        assert!(matches!(min_sensors(0.9, &model(1.0, 6)), Err(Error::Domain(_))));
        assert!(matches!(min_sensors(1.0, &m), Err(Error::Domain(_))));
        assert!(matches!(min_sensors(0.0, &m), Err(Error::Domain(_))));
    }

    #[test]
    fn bound_grid_is_tight_and_monotone() {
        let cs = [0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999];
        let mus = [0.1, 0.2, 0.3, 0.5, 0.62, 0.8, 0.9, 0.99];
        for m in [1, 2, 3, 6, 10, 20] {
            for &mu in &mus {
                let cm = model(mu, m);
                let mut last = 0;
                for &c in &cs {
                    let n = min_sensors(c, &cm).unwrap();
                    assert!(analytic_capability(n, &cm) >= c);
                    assert!(n == 0 || analytic_capability(n - 1, &cm) < c);
                    assert!(n >= last);
                    last = n;
                }
            }
            for &c in &cs {
                let ns: Vec<usize> = mus.iter().map(|&mu| min_sensors(c, &model(mu, m)).unwrap()).collect();
                assert!(ns.windows(2).all(|w| w[0] >= w[1]), "{ns:?}");
            }
        }
    }

    #[test]
    fn bernoulli_limit_matches_closed_form() {
        let m = CapabilityModel { sigma_frac: 0.0, ..model(0.62, 6) };
        let e = mc_capability(5, &m, 10_000, 7, Estimator::AllAnalytes).unwrap();
        let width = e.ci_high - e.ci_low;
        assert!((e.mean - analytic_capability(5, &m)).abs() <= 3.0 * width);
    }

    #[test]
    fn unbiased_over_seeds() {
        let m = CapabilityModel { sigma_frac: 0.0, ..model(0.62, 6) };
        let truth = analytic_capability(4, &m);
        let means: Vec<f64> = (0..50)
            .map(|s| mc_capability(4, &m, 1000, s, Estimator::AllAnalytes).unwrap().mean)
            .collect();
        let grand = means.iter().sum::<f64>() / 50.0;
        let se = (truth * (1.0 - truth) / 50_000.0).sqrt();
        assert!((grand - truth).abs() < 4.0 * se, "{grand} vs {truth}");
    }

    #[test]
    fn single_trial_reproducible() {
        let m = model(0.62, 6);
        let a = mc_capability(3, &m, 1, 99, Estimator::AllAnalytes).unwrap();
        let b = mc_capability(3, &m, 1, 99, Estimator::AllAnalytes).unwrap();
        assert_eq!(a, b);
        assert!(a.mean == 0.0 || a.mean == 1.0);
        assert_eq!((a.ci_low, a.ci_high), (0.0, 1.0));
    }

    #[test]
    fn fraction_estimator_dominates_indicator() {
        let m = model(0.4, 6);
        let all = mc_capability(3, &m, 400, 5, Estimator::AllAnalytes).unwrap();
        let frac = mc_capability(3, &m, 400, 5, Estimator::DetectedFraction).unwrap();
        assert!(frac.mean >= all.mean);
    }

    #[test]
    fn worker_count_invariance() {
        let m = model(0.62, 6);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_capability(4, &m, 2000, 3, Estimator::AllAnalytes).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn crossings_agree_and_single_point_works() {
        let spec = CurveSpec { n_max: 20, trials: 500, estimator: Estimator::AllAnalytes };
        for mu in [0.4, 0.62, 0.8, 1.0] {
            let r = validate_green_modes(&[], &[], &model(mu, 6), &spec, &[0.9], 11).unwrap();
            assert!(r.pass, "mu {mu}: {:?}", r.crossings);
        }
        let r = validate_green_modes(&[5], &[0.99], &model(0.62, 6), &CurveSpec { n_max: 1, ..spec }, &[0.9], 1).unwrap();
        assert_eq!(r.curve.n_values, [1]);
        assert!(r.green_points[0].above_curve);
        assert!(validate_green_modes(&[5], &[], &model(0.62, 6), &spec, &[0.9], 1).is_err());
    }

    #[test]
    fn curve_csv_has_one_row_per_n() {
        let c = theory_curve(&model(0.62, 6), &CurveSpec { n_max: 4, trials: 20, ..Default::default() }, 1).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("n,analytic,mc_mean,ci_low,ci_high"));
    }

    proptest! {
        #[test]
        fn analytic_monotone_and_bounded(n in 0usize..40, mu in 0.01f64..1.0, dmu in 0.0f64..0.5, m in 1usize..12) {
            let a = analytic_capability(n, &model(mu, m));
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(analytic_capability(n + 1, &model(mu, m)) >= a);
            prop_assert!(analytic_capability(n, &model((mu + dmu).min(1.0), m)) >= a);
        }

        #[test]
        fn pairwise_sum_matches_naive(v in proptest::collection::vec(-1e3f64..1e3, 0..200)) {
            let naive: f64 = v.iter().sum();
            prop_assert!((pairwise_sum(&v) - naive).abs() < 1e-8);
        }
    }
}
