//! `greenmode` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use greenmode::config::RunConfig;
use greenmode::models::ModelKind;
use greenmode::pipeline::{self, write_json, write_manifest, write_theory, StageError};
use greenmode::theory::{validate_green_modes, Estimator};
use greenmode::{data, Error};

#[derive(Parser)]
#[command(name = "greenmode", version, about = "Committee-selected sensor subsets and energy-saving modes for sensor arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a planted-sensor dataset and its manifest.
    Synth(SynthArgs),
    /// Run committee, modes and theory validation; write a report bundle.
    Pipeline(PipelineArgs),
    /// Analytic and Monte Carlo capability curves.
    Theory(TheoryArgs),
    /// Re-render the text report from an existing bundle.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    sensors: Option<usize>,
    #[arg(long)]
    informative: Option<usize>,
    /// Nonzero fraction of each informative sensor's sensitivity row.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    mixtures: Option<usize>,
    /// Rows per mixture.
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset CSV; a planted design is synthesized when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Committee admission threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Green-mode sizes, e.g. 5,3,1.
    #[arg(long, value_delimiter = ',')]
    mode_sizes: Option<Vec<usize>>,
    /// Monte Carlo trials per sensor count.
    #[arg(long)]
    trials: Option<usize>,
    /// Hyperparameter override, e.g. XGB.n_trees=50. Repeatable.
    #[arg(long = "param", value_name = "KIND.KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Args)]
struct TheoryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trials: Option<usize>,
    /// Mean capabilities to sweep, e.g. 0.4,0.62,0.8,1.
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of analytes.
    #[arg(long)]
    analytes: Option<usize>,
    /// Largest sensor count on the curve.
    #[arg(long)]
    n_max: Option<usize>,
    /// Capabilities whose crossings are compared.
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<f64>>,
    /// Score the fraction of analytes detected instead of all-detected.
    #[arg(long)]
    fraction: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Bundle directory written by `pipeline`.
    bundle: PathBuf,
}

/// A failure attributed to one stage of a command.
struct Failure {
    stage: String,
    error: anyhow::Error,
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure {
            stage: e.stage.to_string(),
            error: describe(e.source),
        }
    }
}

fn at<T>(stage: &str, r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(|error| Failure { stage: stage.into(), error })
}

/// Names the command-line flag behind a parameter error when there is one.
fn describe(e: Error) -> anyhow::Error {
    if let Error::Parameter { name, reason } = &e {
        let flag = match name.as_str() {
            "density" => Some("--density"),
            "threshold" => Some("--threshold"),
            "trials" => Some("--trials"),
            "mode size" => Some("--mode-sizes"),
            "mu_frac" => Some("--mu"),
            "sigma_frac" => Some("--sigma"),
            _ => None,
        };
        if let Some(flag) = flag {
            return anyhow::anyhow!("invalid value for {flag}: {reason}");
        }
    }
    e.into()
}

fn lift<T>(stage: &str, r: greenmode::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure {
        stage: stage.into(),
        error: describe(e),
    })
}

fn base_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => lift("config", RunConfig::load(p))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, fallback: &str) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn apply_param(cfg: &mut RunConfig, spec: &str) -> anyhow::Result<()> {
    let (lhs, value) = spec.split_once('=').context("expected KIND.KEY=VALUE")?;
    let (kind, key) = lhs.split_once('.').context("expected KIND.KEY=VALUE")?;
    let kind: ModelKind = kind.parse().map_err(describe)?;
    cfg.zoo.overrides.entry(kind).or_default().set(key, value).map_err(describe)?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    let d = &mut cfg.data.planted;
    if let Some(v) = a.sensors {
        d.n_sensors = v;
    }
    if let Some(v) = a.informative {
        d.informative = v;
    }
    if let Some(v) = a.density {
        d.density = v;
    }
    if let Some(v) = a.mixtures {
        d.mixtures = v;
    }
    if let Some(v) = a.repeats {
        d.repeats = v;
    }
    if let Some(v) = a.noise {
        d.noise_sd = v;
    }
    let planted = lift("synth", cfg.data.planted.generate(cfg.seed))?;
    let dir = out_dir(&cfg, ".");
    let ds = planted.dataset.as_ref().expect("generated data");
    lift("write", std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e }))?;
    lift("write", data::save_csv(ds, dir.join("dataset.csv")))?;
    lift("write", write_manifest(&dir.join("manifest.json"), &planted))?;
    println!(
        "wrote {} rows x {} sensors to {}; informative: {}",
        ds.rows(),
        ds.n_sensors(),
        dir.join("dataset.csv").display(),
        planted.informative_sensors.join(", ")
    );
    Ok(())
}

fn run_pipeline(a: PipelineArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    if let Some(p) = a.data {
        cfg.data.path = Some(p);
    }
    if let Some(t) = a.threshold {
        cfg.committee.admission_threshold = t;
    }
    if let Some(s) = a.mode_sizes {
        cfg.modes.sizes = s;
    }
    if let Some(t) = a.trials {
        cfg.theory.trials = t;
    }
    for p in &a.params {
        at("config", apply_param(&mut cfg, p).with_context(|| format!("--param {p}")))?;
    }
    let dir = out_dir(&cfg, "greenmode-out");
    let out = pipeline::run(&cfg, a.common.workers)?;
    pipeline::write_bundle(&out, &dir)?;
    print!("{}", pipeline::render_report(&out.summary));
    println!("bundle: {}", dir.display());
    Ok(())
}

fn theory(a: TheoryArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    let t = &mut cfg.theory;
    if let Some(v) = a.trials {
        t.trials = v;
    }
    if let Some(v) = a.mu {
        t.mu_sweep = v;
    }
    if let Some(v) = a.sigma {
        t.capability.sigma_frac = v;
    }
    if let Some(v) = a.analytes {
        t.capability.m = v;
    }
    if let Some(v) = a.n_max {
        t.n_max = Some(v);
    }
    if let Some(v) = a.targets {
        t.targets = v;
    }
    if a.fraction {
        t.estimator = Estimator::DetectedFraction;
    }
    if t.trials == 0 {
        return Err(Failure {
            stage: "config".into(),
            error: anyhow::anyhow!("invalid value for --trials: must be at least 1"),
        });
    }
    let spec = t.curve_spec(cfg.data.planted.n_sensors);
    let seed = greenmode::seed::derive(cfg.seed, "theory");
    let pool = at("config", rayon::ThreadPoolBuilder::new().num_threads(a.common.workers).build().map_err(Into::into))?;
    let reports = pool.install(|| {
        t.mu_sweep
            .iter()
            .enumerate()
            .map(|(i, &mu)| validate_green_modes(&[], &[], &t.capability.with_mu(mu), &spec, &t.targets, greenmode::seed::derive_index(seed, i as u64)))
            .collect::<greenmode::Result<Vec<_>>>()
    });
    let reports = lift("theory", reports)?;
    let dir = out_dir(&cfg, "greenmode-theory");
    lift("write", write_theory(&dir, &reports))?;
    lift("write", std::fs::write(dir.join("config.toml"), cfg.to_toml().unwrap_or_default()).map_err(|e| Error::Io { path: dir.clone(), source: e }))?;
    for r in &reports {
        for c in &r.crossings {
            println!(
                "mu {:<5} target {:<5} analytic {:>3} mc {:>3} {}",
                r.curve.model.mu_frac,
                c.target,
                c.analytic_n.map_or("-".into(), |n| n.to_string()),
                c.mc_n.map_or("-".into(), |n| n.to_string()),
                if c.agrees { "pass" } else { "fail" }
            );
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    println!("verdict: {}", if pass { "pass" } else { "fail" });
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let summary = lift("report", pipeline::read_summary(&a.bundle))?;
    let text = pipeline::render_report(&summary);
    lift("write", write_json(&a.bundle.join("summary.json"), &summary))?;
    at("write", write_report(&a.bundle, &text))?;
    print!("{text}");
    Ok(())
}

fn write_report(dir: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(dir.join("report.txt"), text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Pipeline(a) => run_pipeline(a),
        Command::Theory(a) => theory(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error in stage `{}`: {:#}", f.stage, f.error);
            ExitCode::from(1)
        }
    }
}
