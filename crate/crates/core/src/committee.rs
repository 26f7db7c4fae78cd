//! Model committee: admission by score threshold and the F1-weighted rank vote.
//!
//! Each committee model contributes a top-K sensor list. A sensor at rank `r`
//! (1-based) in model `j` earns `(K + 1 - r) * F1_j`; sensors outside the top
//! K earn nothing. Weighted scores are these sums normalized by the total over
//! all sensors and models, so they add up to 1.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_indices, LabeledDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ConfusionMatrix, ModelScorecard};
use crate::models::{fit, ModelKind, TrainedModel, ZooConfig};
use crate::seed;

/// Scorecard field that gates admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMetric {
    /// Minimum over the macro and micro precision, recall and F1.
    MinAll,
    MacroF1,
    MicroF1,
    Accuracy,
}

impl GateMetric {
    pub fn of(self, s: &ModelScorecard) -> f64 {
        match self {
            GateMetric::MinAll => s.min_score(),
            GateMetric::MacroF1 => s.macro_f1,
            GateMetric::MicroF1 => s.micro_f1,
            GateMetric::Accuracy => s.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommitteePolicy {
    pub admission_threshold: f64,
    pub metric: GateMetric,
    pub rank_depth: usize,
    pub repeats: usize,
}

impl Default for CommitteePolicy {
    fn default() -> Self {
        CommitteePolicy {
            admission_threshold: 0.7,
            metric: GateMetric::MinAll,
            rank_depth: 5,
            repeats: 5,
        }
    }
}

impl CommitteePolicy {
    /// The lower threshold quoted in the scoring figure caption.
    pub const ALTERNATE_THRESHOLD: f64 = 0.5;

    pub fn validate(&self, n_sensors: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.admission_threshold) {
            return Err(Error::param(
                "threshold",
                format!("{} is outside [0, 1]", self.admission_threshold),
            ));
        }
        if self.rank_depth == 0 || self.rank_depth > n_sensors {
            return Err(Error::param(
                "rank_depth",
                format!("{} is outside 1..={n_sensors}", self.rank_depth),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::param("repeats", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorScore {
    pub sensor: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRanking {
    pub rank_depth: usize,
    pub per_model_ranks: BTreeMap<ModelKind, Vec<String>>,
    pub model_f1: BTreeMap<ModelKind, f64>,
    /// One entry per sensor, in dataset sensor order.
    pub weighted_scores: Vec<SensorScore>,
    /// Every sensor, by weighted score descending; ties keep sensor order.
    pub selected: Vec<String>,
}

impl SensorRanking {
    pub fn score_of(&self, sensor: &str) -> Option<f64> {
        self.weighted_scores.iter().find(|s| s.sensor == sensor).map(|s| s.score)
    }

    pub fn top(&self, k: usize) -> &[String] {
        &self.selected[..k.min(self.selected.len())]
    }

    /// Number of committee models listing each sensor in their top K.
    pub fn frequency(&self) -> Vec<(String, usize)> {
        self.weighted_scores
            .iter()
            .map(|s| {
                let n = self.per_model_ranks.values().filter(|r| r.contains(&s.sensor)).count();
                (s.sensor.clone(), n)
            })
            .collect()
    }

    /// Per sensor, how many models placed it at rank 1..=K.
    pub fn rank_counts(&self) -> Vec<(String, Vec<usize>)> {
        self.weighted_scores
            .iter()
            .map(|s| {
                let mut counts = vec![0; self.rank_depth];
                for ranks in self.per_model_ranks.values() {
                    if let Some(p) = ranks.iter().position(|x| *x == s.sensor) {
                        counts[p] += 1;
                    }
                }
                (s.sensor.clone(), counts)
            })
            .collect()
    }

    /// Plot-ready CSV: sensor, weighted score, frequency, then rank_1..rank_K counts.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["sensor".to_string(), "weighted_score".into(), "frequency".into()];
        header.extend((1..=self.rank_depth).map(|r| format!("rank_{r}")));
        w.write_record(&header)?;
        let freq = self.frequency();
        let counts = self.rank_counts();
        for ((s, (_, f)), (_, c)) in self.weighted_scores.iter().zip(freq).zip(counts) {
            let mut rec = vec![s.sensor.clone(), s.score.to_string(), f.to_string()];
            rec.extend(c.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Kinds whose gating metric reaches the threshold, in kind order.
pub fn admit(scorecards: &BTreeMap<ModelKind, ModelScorecard>, policy: &CommitteePolicy) -> Result<Vec<ModelKind>> {
    if scorecards.is_empty() {
        return Err(Error::param("scorecards", "no models to admit"));
    }
    let admitted: Vec<ModelKind> = scorecards
        .iter()
        .filter(|(_, s)| policy.metric.of(s) >= policy.admission_threshold)
        .map(|(k, _)| *k)
        .collect();
    if admitted.is_empty() {
        let (best_kind, best_score) = scorecards
            .iter()
            .map(|(k, s)| (*k, policy.metric.of(s)))
            .fold((ModelKind::Lr, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        return Err(Error::Admission {
            threshold: policy.admission_threshold,
            best_kind: best_kind.to_string(),
            best_score,
        });
    }
    Ok(admitted)
}

/// Top-`k` sensors by importance; ties keep sensor order.
pub fn rank_by_importance(importance: &[f64], sensor_ids: &[String], k: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    order.into_iter().take(k).map(|i| sensor_ids[i].clone()).collect()
}

pub fn rank_sensors(model: &TrainedModel, k: usize) -> Result<Vec<String>> {
    if k > model.n_sensors() {
        return Err(Error::param("K", format!("{k} exceeds {} sensors", model.n_sensors())));
    }
    Ok(rank_by_importance(&model.importance, &model.sensor_ids, k))
}

pub fn weighted_vote(
    sensor_ids: &[String],
    per_model_ranks: &BTreeMap<ModelKind, Vec<String>>,
    model_f1: &BTreeMap<ModelKind, f64>,
    k: usize,
) -> Result<SensorRanking> {
    if k == 0 {
        return Err(Error::param("K", "must be at least 1"));
    }
    let mut raw = vec![0.0; sensor_ids.len()];
    for (kind, ranks) in per_model_ranks {
        if ranks.len() > k {
            return Err(Error::param("ranks", format!("{kind} lists {} sensors, K is {k}", ranks.len())));
        }
        let f1 = *model_f1
            .get(kind)
            .ok_or_else(|| Error::param("model_f1", format!("no F1 weight for {kind}")))?;
        if !(f1.is_finite() && f1 >= 0.0) {
            return Err(Error::param("model_f1", format!("{kind} weight {f1} is negative or non-finite")));
        }
        for (pos, sensor) in ranks.iter().enumerate() {
            let i = sensor_ids
                .iter()
                .position(|s| s == sensor)
                .ok_or_else(|| Error::param("ranks", format!("unknown sensor `{sensor}`")))?;
            if ranks[..pos].contains(sensor) {
                return Err(Error::param("ranks", format!("{kind} lists `{sensor}` twice")));
            }
            raw[i] += (k - pos) as f64 * f1;
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let weighted: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let mut order: Vec<usize> = (0..sensor_ids.len()).collect();
    order.sort_by(|&a, &b| weighted[b].total_cmp(&weighted[a]).then(a.cmp(&b)));
    Ok(SensorRanking {
        rank_depth: k,
        per_model_ranks: per_model_ranks.clone(),
        model_f1: model_f1.clone(),
        weighted_scores: sensor_ids
            .iter()
            .zip(&weighted)
            .map(|(s, &score)| SensorScore { sensor: s.clone(), score })
            .collect(),
        selected: order.into_iter().map(|i| sensor_ids[i].clone()).collect(),
    })
}

/// Result of one fitted kind in one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindShot {
    pub kind: ModelKind,
    pub scorecard: ModelScorecard,
    pub confusion: ConfusionMatrix,
    pub importance: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub index: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub kinds: Vec<KindShot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub mean: ModelScorecard,
    pub std: ModelScorecard,
    pub mean_importance: Vec<f64>,
    pub gate_score: f64,
    pub admitted: bool,
    pub converged_all: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeRun {
    pub policy: CommitteePolicy,
    pub shots: Vec<Shot>,
    pub summaries: BTreeMap<ModelKind, KindSummary>,
    pub admitted: Vec<ModelKind>,
    pub ranking: SensorRanking,
}

/// Split seed of shot `s`.
pub fn shot_split_seed(master: u64, shot: usize) -> u64 {
    seed::derive_index(seed::derive(master, "committee/split"), shot as u64)
}

/// Fit seed of `kind` in shot `s`.
pub fn shot_fit_seed(master: u64, shot: usize, kind: ModelKind) -> u64 {
    seed::derive(seed::derive_index(seed::derive(master, "committee/fit"), shot as u64), kind.name())
}

/// Repeated split, fit, evaluate and importance extraction, then admission on
/// mean scorecards and the weighted vote over mean importances (weights: mean
/// macro F1 of each admitted kind).
pub fn run_committee(ds: &LabeledDataset, policy: &CommitteePolicy, zoo: &ZooConfig, master: u64) -> Result<CommitteeRun> {
    policy.validate(ds.n_sensors())?;
    zoo.validate()?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..policy.repeats)
        .map(|s| {
            stratified_indices(
                ds,
                &SplitSpec {
                    train_fraction: zoo.train_fraction,
                    seed: shot_split_seed(master, s),
                },
            )
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, ModelKind)> = (0..policy.repeats)
        .flat_map(|s| zoo.kinds.iter().map(move |&k| (s, k)))
        .collect();
    let results: Vec<KindShot> = jobs
        .par_iter()
        .map(|&(s, kind)| -> Result<KindShot> {
            let (tr, te) = &splits[s];
            let train = ds.subset(tr);
            let test = ds.subset(te);
            let model = fit(kind, &zoo.params_for(kind, shot_fit_seed(master, s, kind)), &train)?;
            let (cm, sc) = evaluate(&model, &test)?;
            Ok(KindShot {
                kind,
                scorecard: sc,
                confusion: cm,
                importance: model.importance,
                converged: model.converged,
            })
        })
        .collect::<Result<_>>()?;

    let mut shots: Vec<Shot> = splits
        .iter()
        .enumerate()
        .map(|(i, (tr, te))| Shot {
            index: i,
            train_rows: tr.len(),
            test_rows: te.len(),
            kinds: Vec::new(),
        })
        .collect();
    for ((s, _), r) in jobs.iter().zip(results) {
        shots[*s].kinds.push(r);
    }

    let mut summaries = BTreeMap::new();
    let mut means = BTreeMap::new();
    for &kind in &zoo.kinds {
        let runs: Vec<&KindShot> = shots.iter().flat_map(|s| s.kinds.iter().filter(|k| k.kind == kind)).collect();
        let cards: Vec<ModelScorecard> = runs.iter().map(|r| r.scorecard).collect();
        let (mean, std) = ModelScorecard::mean_std(&cards);
        let mut imp = vec![0.0; ds.n_sensors()];
        for r in &runs {
            for (a, b) in imp.iter_mut().zip(&r.importance) {
                *a += b / runs.len() as f64;
            }
        }
        means.insert(kind, mean);
        summaries.insert(
            kind,
            KindSummary {
                mean,
                std,
                mean_importance: imp,
                gate_score: policy.metric.of(&mean),
                admitted: false,
                converged_all: runs.iter().all(|r| r.converged),
            },
        );
    }

    let admitted = admit(&means, policy)?;
    let mut per_model_ranks = BTreeMap::new();
    let mut model_f1 = BTreeMap::new();
    for kind in &admitted {
        let s = summaries.get_mut(kind).expect("summary exists");
        s.admitted = true;
        per_model_ranks.insert(*kind, rank_by_importance(&s.mean_importance, ds.sensor_ids(), policy.rank_depth));
        model_f1.insert(*kind, s.mean.macro_f1);
    }
    let ranking = weighted_vote(ds.sensor_ids(), &per_model_ranks, &model_f1, policy.rank_depth)?;
    Ok(CommitteeRun {
        policy: policy.clone(),
        shots,
        summaries,
        admitted,
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("s{i}")).collect()
    }

    fn card(v: f64) -> ModelScorecard {
        ModelScorecard {
            accuracy: v,
            macro_precision: v,
            macro_recall: v,
            macro_f1: v,
            micro_precision: v,
            micro_recall: v,
            micro_f1: v,
        }
    }

    #[test]
    fn admission_picks_strong_models() {
        let mut cards = BTreeMap::new();
        for (k, v) in ModelKind::ALL.iter().zip([0.3, 0.35, 0.4, 0.5, 0.6, 0.8, 0.82, 0.88]) {
            cards.insert(*k, card(v));
        }
        let p = CommitteePolicy::default();
        assert_eq!(admit(&cards, &p).unwrap(), [ModelKind::Et, ModelKind::Rf, ModelKind::Xgb]);
        let zero = CommitteePolicy { admission_threshold: 0.0, ..p.clone() };
        assert_eq!(admit(&cards, &zero).unwrap().len(), 8);
        let one = CommitteePolicy { admission_threshold: 1.0, ..p };
        match admit(&cards, &one) {
            Err(Error::Admission { best_kind, best_score, .. }) => {
                assert_eq!(best_kind, "XGB");
                assert_eq!(best_score, 0.88);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gate_uses_minimum_of_six_scores() {
        let mut c = card(0.9);
        c.macro_recall = 0.65;
        let mut cards = BTreeMap::new();
        cards.insert(ModelKind::Rf, c);
        cards.insert(ModelKind::Xgb, card(0.75));
        assert_eq!(admit(&cards, &CommitteePolicy::default()).unwrap(), [ModelKind::Xgb]);
    }

    #[test]
    fn rank_by_importance_ties_keep_order() {
        let s = ids(3);
        assert_eq!(rank_by_importance(&[0.5, 0.3, 0.2], &s, 2), ["s1", "s2"]);
        assert_eq!(rank_by_importance(&[0.25; 4], &ids(4), 3), ["s1", "s2", "s3"]);
        assert_eq!(rank_by_importance(&[0.1, 0.6, 0.3], &s, 3), ["s2", "s3", "s1"]);
    }

    #[test]
    fn single_model_normalization() {
        let s = ids(4);
        let ranks = BTreeMap::from([(ModelKind::Rf, vec!["s1".into(), "s2".into(), "s3".into()])]);
        let f1 = BTreeMap::from([(ModelKind::Rf, 1.0)]);
        let r = weighted_vote(&s, &ranks, &f1, 5).unwrap();
        let got: Vec<f64> = r.weighted_scores.iter().map(|x| x.score).collect();
        for (g, e) in got.iter().zip([5.0 / 12.0, 4.0 / 12.0, 3.0 / 12.0, 0.0]) {
            assert!((g - e).abs() < 1e-15);
        }
        assert_eq!(r.selected, ["s1", "s2", "s3", "s4"]);
    }

    #[test]
    fn two_model_hand_arithmetic() {
        let s = ids(3);
        let ranks = BTreeMap::from([
            (ModelKind::Rf, vec!["s1".to_string(), "s2".into(), "s3".into()]),
            (ModelKind::Xgb, vec!["s2".to_string(), "s1".into(), "s3".into()]),
        ]);
        let f1 = BTreeMap::from([(ModelKind::Rf, 0.8), (ModelKind::Xgb, 0.6)]);
        let r = weighted_vote(&s, &ranks, &f1, 3).unwrap();
        // raw 3.6, 3.4, 1.4 over total 8.4
        let expect = [3.6 / 8.4, 3.4 / 8.4, 1.4 / 8.4];
        for (g, e) in r.weighted_scores.iter().zip(expect) {
            assert!((g.score - e).abs() < 1e-12);
        }
        assert!((r.score_of("s1").unwrap() - 0.4286).abs() < 1e-4);
        assert_eq!(r.frequency()[2], ("s3".to_string(), 2));
        assert_eq!(r.rank_counts()[0].1, [1, 1, 0]);
    }

    #[test]
    fn vote_errors() {
        let s = ids(3);
        let ranks = BTreeMap::from([(ModelKind::Rf, vec!["s1".to_string()])]);
        let zero = BTreeMap::from([(ModelKind::Rf, 0.0)]);
        assert!(matches!(weighted_vote(&s, &ranks, &zero, 3), Err(Error::DegenerateWeights)));
        let one = BTreeMap::from([(ModelKind::Rf, 1.0)]);
        let long = BTreeMap::from([(ModelKind::Rf, vec!["s1".to_string(), "s2".into()])]);
        assert!(weighted_vote(&s, &long, &one, 1).is_err());
        let unknown = BTreeMap::from([(ModelKind::Rf, vec!["s9".to_string()])]);
        assert!(weighted_vote(&s, &unknown, &one, 3).is_err());
        let dup = BTreeMap::from([(ModelKind::Rf, vec!["s1".to_string(), "s1".into()])]);
        assert!(weighted_vote(&s, &dup, &one, 3).is_err());
    }

    fn arb_instance() -> impl Strategy<Value = (usize, Vec<Vec<usize>>, Vec<f64>)> {
        (3usize..12, 1usize..6).prop_flat_map(|(n, models)| {
            let k = n.min(5);
            (
                Just(n),
                proptest::collection::vec(Just((0..n).collect::<Vec<_>>()).prop_shuffle(), models)
                    .prop_map(move |v| v.into_iter().map(|mut r| { r.truncate(k); r }).collect()),
                proptest::collection::vec(0.05f64..1.0, models),
            )
        })
    }

    fn build(n: usize, ranks: &[Vec<usize>], f1: &[f64]) -> (Vec<String>, BTreeMap<ModelKind, Vec<String>>, BTreeMap<ModelKind, f64>) {
        let s = ids(n);
        let r = ranks
            .iter()
            .enumerate()
            .map(|(j, v)| (ModelKind::ALL[j], v.iter().map(|&i| s[i].clone()).collect()))
            .collect();
        let w = f1.iter().enumerate().map(|(j, &f)| (ModelKind::ALL[j], f)).collect();
        (s, r, w)
    }

    proptest! {
        #[test]
        fn scores_sum_to_one((n, ranks, f1) in arb_instance()) {
            let (s, r, w) = build(n, &ranks, &f1);
            let out = weighted_vote(&s, &r, &w, n.min(5)).unwrap();
            let total: f64 = out.weighted_scores.iter().map(|x| x.score).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(out.weighted_scores.iter().all(|x| x.score >= 0.0));
            for pair in out.selected.windows(2) {
                prop_assert!(out.score_of(&pair[0]).unwrap() >= out.score_of(&pair[1]).unwrap());
            }
        }

        #[test]
        fn common_weight_scaling_keeps_selection((n, ranks, f1) in arb_instance(), c in 0.01f64..1.0) {
            let (s, r, w) = build(n, &ranks, &f1);
            let scaled: BTreeMap<_, _> = w.iter().map(|(k, v)| (*k, v * c)).collect();
            let a = weighted_vote(&s, &r, &w, n.min(5)).unwrap();
            let b = weighted_vote(&s, &r, &scaled, n.min(5)).unwrap();
            prop_assert_eq!(&a.selected, &b.selected);
            for (x, y) in a.weighted_scores.iter().zip(&b.weighted_scores) {
                prop_assert!((x.score - y.score).abs() < 1e-12);
            }
        }

        #[test]
        fn promotion_never_lowers_score((n, ranks, f1) in arb_instance(), model in 0usize..6, pos in 1usize..5) {
            let (s, r, w) = build(n, &ranks, &f1);
            let j = model % ranks.len();
            let pos = pos % ranks[j].len().max(1);
            prop_assume!(pos >= 1);
            let mut promoted = ranks.clone();
            promoted[j].swap(pos - 1, pos);
            let sensor = s[ranks[j][pos]].clone();
            let (_, r2, _) = build(n, &promoted, &f1);
            let k = n.min(5);
            let before = weighted_vote(&s, &r, &w, k).unwrap().score_of(&sensor).unwrap();
            let after = weighted_vote(&s, &r2, &w, k).unwrap().score_of(&sensor).unwrap();
            prop_assert!(after >= before - 1e-15);
        }

        #[test]
        fn unanimous_lists_win_regardless_of_weights(n in 5usize..12, models in 1usize..6, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut crate::seed::rng(seed));
            order.truncate(5);
            let ranks = vec![order.clone(); models];
            let f1: Vec<f64> = (0..models).map(|j| 0.1 + 0.17 * j as f64).collect();
            let (s, r, w) = build(n, &ranks, &f1);
            let out = weighted_vote(&s, &r, &w, 5).unwrap();
            let expect: Vec<String> = order.iter().map(|&i| s[i].clone()).collect();
            prop_assert_eq!(out.top(5), &expect[..]);
        }
    }
}
