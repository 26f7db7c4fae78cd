//! End-to-end run: load, committee, modes, theory, and the output bundle.
//!
//! Bundle layout:
//!
//! ```text
//! config.toml          effective configuration, master seed included
//! summary.json         deterministic digest of every stage
//! timings.json         wall-clock stage durations (not deterministic)
//! manifest.json        planted ground truth, synthetic runs only
//! committee/           per-kind scorecards, shots, confusion matrices
//! ranking.json|csv     weighted vote and diagnostics
//! modes.json|csv       mode table, per-repeat scores
//! theory/              one curve CSV per mean capability, verdicts.json
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::committee::{run_committee, CommitteeRun};
use crate::config::{LoadedData, RunConfig};
use crate::data::PlantedData;
use crate::error::{Error, Result};
use crate::eval::{write_confusion_csv, ModelScorecard};
use crate::models::ModelKind;
use crate::modes::{build_modes, evaluate_modes, ModeReport, ModeTableRow};
use crate::seed;
use crate::theory::{validate_green_modes, CrossingVerdict, GreenPoint, TheoryReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Committee,
    Modes,
    Theory,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Committee => "committee",
            Stage::Modes => "modes",
            Stage::Theory => "theory",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindDigest {
    pub mean: ModelScorecard,
    pub std: ModelScorecard,
    pub gate_score: f64,
    pub admitted: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryDigest {
    pub mu_frac: f64,
    pub crossings: Vec<CrossingVerdict>,
    pub green_points: Vec<GreenPoint>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub rows: usize,
    pub sensors: Vec<String>,
    pub class_counts: BTreeMap<String, usize>,
    pub planted_sensors: Option<Vec<String>>,
    pub admission_threshold: f64,
    pub models: BTreeMap<ModelKind, KindDigest>,
    pub admitted: Vec<ModelKind>,
    pub weighted_scores: BTreeMap<String, f64>,
    pub selected: Vec<String>,
    /// The first `rank_depth` entries of `selected`.
    pub top_sensors: Vec<String>,
    pub planted_recovered: Option<bool>,
    pub modes: Vec<ModeTableRow>,
    pub theory: Vec<TheoryDigest>,
    pub theory_pass: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub stages: BTreeMap<String, f64>,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub config: RunConfig,
    pub planted: Option<PlantedData>,
    pub committee: CommitteeRun,
    pub modes: ModeReport,
    pub theory: Vec<TheoryReport>,
    pub summary: Summary,
    pub timings: Timings,
}

/// Runs every stage on a dedicated pool of `workers` threads (0 = rayon's
/// default). Results do not depend on the worker count.
pub fn run(cfg: &RunConfig, workers: usize) -> std::result::Result<PipelineOutput, StageError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| StageError {
            stage: Stage::Config,
            source: Error::param("workers", e.to_string()),
        })?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &RunConfig) -> std::result::Result<PipelineOutput, StageError> {
    let mut timings = Timings {
        workers: rayon::current_num_threads(),
        ..Default::default()
    };
    let mut clock = Instant::now();
    let mut lap = |name: &str, t: &mut Timings| {
        t.stages.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    cfg.validate().at(Stage::Config)?;
    let loaded = cfg.load_data().at(Stage::Load)?;
    let ds = loaded.dataset().clone();
    lap("load", &mut timings);

    let committee = run_committee(&ds, &cfg.committee, &cfg.zoo, seed::derive(cfg.seed, "committee")).at(Stage::Committee)?;
    lap("committee", &mut timings);

    let modes = build_modes(ds.sensor_ids(), &committee.ranking, &cfg.modes.sizes, cfg.modes.readout).at(Stage::Modes)?;
    let report = evaluate_modes(
        &modes,
        &ds,
        &cfg.zoo,
        cfg.modes.repeats,
        seed::derive(cfg.seed, "modes"),
        cfg.modes.power.as_deref(),
    )
    .at(Stage::Modes)?;
    lap("modes", &mut timings);

    // Green-mode points carry each mode's mean accuracy as its empirical capability.
    let green: Vec<_> = report.modes.iter().filter(|m| !m.mode.is_blue()).collect();
    let ns: Vec<usize> = green.iter().map(|m| m.mode.active_sensors.len()).collect();
    let caps: Vec<f64> = green.iter().map(|m| m.mean.accuracy).collect();
    let spec = cfg.theory.curve_spec(ds.n_sensors());
    let theory_seed = seed::derive(cfg.seed, "theory");
    let theory: Vec<TheoryReport> = cfg
        .theory
        .mu_sweep
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            validate_green_modes(
                &ns,
                &caps,
                &cfg.theory.capability.with_mu(mu),
                &spec,
                &cfg.theory.targets,
                seed::derive_index(theory_seed, i as u64),
            )
        })
        .collect::<Result<_>>()
        .at(Stage::Theory)?;
    lap("theory", &mut timings);

    let planted = loaded.planted().cloned();
    let summary = summarize(cfg, &loaded, &committee, &report, &theory);
    Ok(PipelineOutput {
        config: cfg.clone(),
        planted,
        committee,
        modes: report,
        theory,
        summary,
        timings,
    })
}

fn summarize(cfg: &RunConfig, loaded: &LoadedData, committee: &CommitteeRun, modes: &ModeReport, theory: &[TheoryReport]) -> Summary {
    let ds = loaded.dataset();
    let k = committee.policy.rank_depth;
    let top: Vec<String> = committee.ranking.top(k).to_vec();
    let planted_sensors = loaded.planted().map(|p| p.informative_sensors.clone());
    let planted_recovered = planted_sensors.as_ref().map(|p| {
        let mut a = top.clone();
        a.sort();
        let mut b = p.clone();
        b.sort();
        a == b
    });
    Summary {
        seed: cfg.seed,
        rows: ds.rows(),
        sensors: ds.sensor_ids().to_vec(),
        class_counts: ds.class_counts().into_iter().map(|(l, c)| (l.to_string(), c)).collect(),
        planted_sensors,
        admission_threshold: committee.policy.admission_threshold,
        models: committee
            .summaries
            .iter()
            .map(|(kind, s)| {
                (
                    *kind,
                    KindDigest {
                        mean: s.mean,
                        std: s.std,
                        gate_score: s.gate_score,
                        admitted: s.admitted,
                        converged: s.converged_all,
                    },
                )
            })
            .collect(),
        admitted: committee.admitted.clone(),
        weighted_scores: committee
            .ranking
            .weighted_scores
            .iter()
            .map(|s| (s.sensor.clone(), s.score))
            .collect(),
        selected: committee.ranking.selected.clone(),
        top_sensors: top,
        planted_recovered,
        modes: modes.table(),
        theory: theory
            .iter()
            .map(|t| TheoryDigest {
                mu_frac: t.curve.model.mu_frac,
                crossings: t.crossings.clone(),
                green_points: t.green_points.clone(),
                pass: t.pass,
            })
            .collect(),
        theory_pass: theory.iter().all(|t| t.pass),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// File-name label for a mean capability, e.g. `0.62` → `mu_0.62`.
pub fn mu_label(mu: f64) -> String {
    format!("mu_{mu}")
}

/// Writes the mean/verdict files and one CSV per curve into `dir`.
pub fn write_theory(dir: &Path, reports: &[TheoryReport]) -> Result<()> {
    for r in reports {
        r.curve.write_csv(create(&dir.join(format!("curve_{}.csv", mu_label(r.curve.model.mu_frac))))?)?;
    }
    write_json(&dir.join("verdicts.json"), &reports.iter().map(|r| (r.curve.model.mu_frac, &r.crossings, &r.green_points, r.pass)).collect::<Vec<_>>())?;
    write_json(&dir.join("curves.json"), &reports.iter().map(|r| &r.curve).collect::<Vec<_>>())
}

pub fn write_manifest(path: &Path, planted: &PlantedData) -> Result<()> {
    write_json(path, planted)
}

/// Writes the whole bundle. Every path lies under `dir`.
pub fn write_bundle(out: &PipelineOutput, dir: &Path) -> std::result::Result<(), StageError> {
    write_bundle_inner(out, dir).at(Stage::Write)
}

fn write_bundle_inner(out: &PipelineOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("config.toml"), &out.config.to_toml()?)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    write_json(&dir.join("timings.json"), &out.timings)?;
    if let Some(p) = &out.planted {
        write_manifest(&dir.join("manifest.json"), p)?;
    }

    let cdir = dir.join("committee");
    write_json(&cdir.join("scorecards.json"), &out.committee.summaries)?;
    write_json(&cdir.join("shots.json"), &out.committee.shots)?;
    for shot in &out.committee.shots {
        for k in &shot.kinds {
            let path = cdir.join(format!("confusion_{}_shot{}.csv", k.kind.name(), shot.index));
            write_confusion_csv(&k.confusion, create(&path)?)?;
        }
    }

    write_json(&dir.join("ranking.json"), &out.committee.ranking)?;
    out.committee.ranking.write_csv(create(&dir.join("ranking.csv"))?)?;

    write_json(&dir.join("modes.json"), &out.modes)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("modes.csv"))?);
    for row in out.modes.table() {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(dir.join("modes.csv"), e))?;
    out.modes.write_repeats_csv(create(&dir.join("modes_repeats.csv"))?)?;

    write_theory(&dir.join("theory"), &out.theory)
}

/// Plain-text tables rendered from a bundle's summary.
pub fn render_report(summary: &Summary) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "seed {}  rows {}  sensors {}", summary.seed, summary.rows, summary.sensors.len());
    let _ = writeln!(s, "\nmodel     acc    macroF1  microF1  gate   admitted");
    for (kind, d) in &summary.models {
        let _ = writeln!(
            s,
            "{:<8} {:>6.3} {:>8.3} {:>8.3} {:>6.3}  {}",
            kind.name(),
            d.mean.accuracy,
            d.mean.macro_f1,
            d.mean.micro_f1,
            d.gate_score,
            if d.admitted { "yes" } else { "no" }
        );
    }
    let _ = writeln!(s, "\ntop sensors: {}", summary.top_sensors.join(", "));
    if let Some(ok) = summary.planted_recovered {
        let _ = writeln!(s, "planted set recovered: {ok}");
    }
    let _ = writeln!(s, "\nmode      sensors  acc    prec   recall  F1     dF1     savings");
    for m in &summary.modes {
        let _ = writeln!(
            s,
            "{:<9} {:>7} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>7.3} {:>7.1}%",
            m.mode,
            m.sensors,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.f1_reduction,
            100.0 * m.energy_savings
        );
    }
    let _ = writeln!(s, "\nmu     target  analytic_n  mc_n  agrees");
    for t in &summary.theory {
        for c in &t.crossings {
            let show = |n: Option<usize>| n.map_or("-".to_string(), |v| v.to_string());
            let _ = writeln!(
                s,
                "{:<6} {:<7} {:<11} {:<5} {}",
                t.mu_frac,
                c.target,
                show(c.analytic_n),
                show(c.mc_n),
                c.agrees
            );
        }
    }
    let _ = writeln!(s, "theory verdict: {}", if summary.theory_pass { "pass" } else { "fail" });
    s
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
