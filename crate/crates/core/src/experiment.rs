//! Experiment drivers behind the command-line tool: a synthetic quadratic
//! study and a Bayesian logistic-regression study, both configured by a flat
//! `key = value` file plus overrides, both writing deterministic CSV, JSON
//! and text artifacts.
//!
//! Config keys apply to every method; `method.key` (for example
//! `sg.step = 0.001`) overrides one method.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{read_libsvm, split, standardize, Dataset, LabelPolicy, Provenance};
use crate::error::{Error, Result};
use crate::estimator::{mseb_descriptor, EstimatorConfig, EstimatorKind};
use crate::integrator::DynamicsParams;
use crate::metrics::{bures_w2, gradient_mse, potential_mse, GaussianSummary};
use crate::potential::{sigmoid, LogisticPotential, Potential, QuadraticPotential};
use crate::sampler::{pooled_moments, query_alignment, run_ensemble, Budget, Diagnostics, Ensemble, SamplerConfig};

/// Synthetic default step sizes are this multiple of the full-gradient
/// advisory bound.
pub const STEP_RELAXATION: f64 = 20.0;

/// Synthetic default dissipation γ.
pub const SYNTHETIC_GAMMA: f64 = 2.0;

/// Logistic default friction rate γξ. With ξ = 1/L and γ = 2 the rate is
/// 2/L, which leaves ill-conditioned posteriors ringing for hundreds of time
/// units; a unit-order rate damps within a few.
pub const LOGISTIC_FRICTION: f64 = 2.0;

/// Logistic default step in units of the stiffest period, h = c/√(ξL).
pub const LOGISTIC_STEP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Synthetic,
    Logistic,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "synthetic" => Ok(Self::Synthetic),
            "logistic" => Ok(Self::Logistic),
            other => Err(Error::Config(format!("unknown experiment {other:?}"))),
        }
    }
}

/// Unresolved `key = value` pairs, later entries winning.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            raw.set(key, value.trim());
        }
        Ok(raw)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
            })
            .transpose()
    }
}

const GLOBAL_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "out",
    "methods",
    "stride",
    "diagnostics",
    "L",
    "m",
    "d",
    "N",
    "data_seed",
    "data",
    "label_policy",
    "dim",
    "prior",
    "split_ratio",
    "split_seed",
    "standardize",
];

const METHOD_KEYS: &[&str] = &[
    "batch",
    "epoch",
    "step",
    "gamma",
    "xi",
    "iterations",
    "budget_epochs",
    "burn_in",
    "chains",
];

/// Command-line overrides; each beats both global and per-method file keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub full_scale: bool,
    pub diagnostics: bool,
    pub methods: Option<Vec<EstimatorKind>>,
    pub batch: Option<usize>,
    pub epoch: Option<usize>,
    pub step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSettings {
    /// Bound on the largest eigenvalue of the precision matrix.
    pub l: f64,
    /// Bound on the smallest eigenvalue of the precision matrix.
    pub m: f64,
    pub d: usize,
    pub n: usize,
    pub data_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticSettings {
    /// LIBSVM file; a generated 690×14 dataset when absent.
    pub data: Option<PathBuf>,
    pub label_policy: LabelPolicy,
    pub dim: Option<usize>,
    pub prior: f64,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub standardize: bool,
    pub data_seed: u64,
}

/// One method's resolved settings. `step`, `xi` and `epoch` left `None`
/// take model-dependent defaults when the model is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub kind: EstimatorKind,
    pub batch: usize,
    pub epoch: Option<usize>,
    pub step: Option<f64>,
    pub gamma: Option<f64>,
    pub xi: Option<f64>,
    pub iterations: Option<u64>,
    pub budget_epochs: Option<f64>,
    pub burn_in: u64,
    pub chains: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out: PathBuf,
    pub stride: u64,
    pub diagnostics: bool,
    pub full_scale: bool,
    pub synthetic: Option<SyntheticSettings>,
    pub logistic: Option<LogisticSettings>,
    pub methods: Vec<MethodSettings>,
}

fn parse_methods(list: &str) -> Result<Vec<EstimatorKind>> {
    let kinds = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(EstimatorKind::from_str)
        .collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    Ok(kinds)
}

impl ExperimentConfig {
    /// Defaults for `kind`, then `raw`, then `overrides`.
    pub fn resolve(kind: ExperimentKind, raw: &RawConfig, overrides: &Overrides) -> Result<Self> {
        if let Some(k) = raw.parsed::<ExperimentKind>("experiment")? {
            if k != kind {
                return Err(Error::Config(format!("config is for {k:?}, not {kind:?}")));
            }
        }
        for key in raw.entries.keys() {
            let known = match key.split_once('.') {
                Some((method, k)) => EstimatorKind::from_str(method).is_ok() && METHOD_KEYS.contains(&k),
                None => GLOBAL_KEYS.contains(&key.as_str()) || METHOD_KEYS.contains(&key.as_str()),
            };
            if !known {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        let full = overrides.full_scale;
        let seed = overrides.seed.or(raw.parsed("seed")?).unwrap_or(0);
        let out = overrides
            .out
            .clone()
            .or(raw.get("out").map(PathBuf::from))
            .unwrap_or_else(|| {
                PathBuf::from(format!(
                    "out/{}",
                    if kind == ExperimentKind::Synthetic {
                        "synthetic"
                    } else {
                        "logistic"
                    }
                ))
            });
        let kinds = match &overrides.methods {
            Some(k) => k.clone(),
            None => match raw.get("methods") {
                Some(list) => parse_methods(list)?,
                None => EstimatorKind::ALL.to_vec(),
            },
        };

        let (synthetic, logistic) = match kind {
            ExperimentKind::Synthetic => (
                Some(SyntheticSettings {
                    l: raw.parsed("L")?.unwrap_or(10.0),
                    m: raw.parsed("m")?.unwrap_or(1.0),
                    d: raw.parsed("d")?.unwrap_or(5),
                    n: raw.parsed("N")?.unwrap_or(1000),
                    data_seed: raw.parsed("data_seed")?.unwrap_or(seed),
                }),
                None,
            ),
            ExperimentKind::Logistic => (
                None,
                Some(LogisticSettings {
                    data: raw.get("data").map(PathBuf::from),
                    label_policy: raw.parsed("label_policy")?.unwrap_or(LabelPolicy::Auto),
                    dim: raw.parsed("dim")?,
                    prior: raw.parsed("prior")?.unwrap_or(1.0),
                    split_ratio: raw.parsed("split_ratio")?.unwrap_or(0.5),
                    split_seed: raw.parsed("split_seed")?.unwrap_or(seed),
                    standardize: raw.flag("standardize")?.unwrap_or(true),
                    data_seed: raw.parsed("data_seed")?.unwrap_or(seed),
                }),
            ),
        };

        // Desk-scale defaults; full scale restores the long accumulation and
        // large ensembles.
        let (iterations, budget_epochs, burn_in, chains, stride) = match (kind, full) {
            (ExperimentKind::Synthetic, false) => (Some(100_000u64), None, 10_000u64, 4usize, 10u64),
            (ExperimentKind::Synthetic, true) => (Some(10_000_000), None, 10_000, 16, 1_000),
            (ExperimentKind::Logistic, false) => (None, Some(50.0), 0, 8, 25),
            (ExperimentKind::Logistic, true) => (None, Some(50.0), 0, 2_000, 25),
        };

        let mut methods = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let get = |key: &str| -> Option<&str> { raw.get(&format!("{}.{key}", kind.name())).or(raw.get(key)) };
            fn parse<T: FromStr>(key: &str, v: Option<&str>) -> Result<Option<T>> {
                v.map(|s| {
                    s.parse::<T>()
                        .map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
                })
                .transpose()
            }
            let mut m = MethodSettings {
                kind,
                batch: parse("batch", get("batch"))?.unwrap_or(1),
                epoch: parse("epoch", get("epoch"))?,
                step: parse("step", get("step"))?,
                gamma: parse("gamma", get("gamma"))?,
                xi: parse("xi", get("xi"))?,
                iterations: parse("iterations", get("iterations"))?.or(iterations),
                budget_epochs: parse("budget_epochs", get("budget_epochs"))?,
                burn_in: parse("burn_in", get("burn_in"))?.unwrap_or(burn_in),
                chains: parse("chains", get("chains"))?.unwrap_or(chains),
            };
            // an explicit query budget replaces the iteration budget
            if m.budget_epochs.is_some() {
                m.iterations = None;
            } else if m.iterations.is_none() {
                m.budget_epochs = budget_epochs;
            }
            if let Some(b) = overrides.batch {
                m.batch = b;
            }
            if let Some(p) = overrides.epoch {
                m.epoch = Some(p);
            }
            if let Some(h) = overrides.step {
                m.step = Some(h);
            }
            methods.push(m);
        }

        Ok(Self {
            kind,
            seed,
            out,
            stride: raw.parsed("stride")?.unwrap_or(stride),
            diagnostics: overrides.diagnostics || raw.flag("diagnostics")?.unwrap_or(false),
            full_scale: full,
            synthetic,
            logistic,
            methods,
        })
    }
}

/// Largest step allowed by the sufficient condition
/// `L h ≤ (1/(10κ))·min(1, 1/√Θ)`.
pub fn step_bound(smoothness: f64, kappa: f64, theta: f64) -> f64 {
    let shrink = if theta > 1.0 { 1.0 / theta.sqrt() } else { 1.0 };
    shrink / (10.0 * kappa * smoothness)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvisoryRow {
    pub method: String,
    pub batch: usize,
    pub epoch: usize,
    pub theta: Option<f64>,
    pub bound_step: Option<f64>,
    pub step: f64,
    pub exceeds: Option<bool>,
}

/// A method's settings with model-dependent defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedMethod {
    pub settings: MethodSettings,
    pub epoch: usize,
    pub step: f64,
    pub gamma: f64,
    pub xi: f64,
    pub sampler: SamplerConfig,
    pub advisory: AdvisoryRow,
}

fn resolve_method(
    m: &MethodSettings,
    model: &dyn Potential,
    config: &ExperimentConfig,
    diagnostics: Diagnostics,
) -> Result<ResolvedMethod> {
    let (n, l, kappa) = (model.n_components(), model.smoothness(), model.condition_number());
    let epoch = m
        .epoch
        .unwrap_or_else(|| EstimatorConfig::with_default_epoch(m.kind, n, m.batch.max(1)).epoch_length);
    let estimator = EstimatorConfig::new(m.kind, m.batch, epoch);
    estimator.validate(n)?;
    let xi = m.xi.unwrap_or(1.0 / l);
    let (gamma, step) = match config.kind {
        ExperimentKind::Synthetic => (
            m.gamma.unwrap_or(SYNTHETIC_GAMMA),
            m.step.unwrap_or(STEP_RELAXATION * step_bound(l, kappa, 0.0)),
        ),
        ExperimentKind::Logistic => (
            m.gamma.unwrap_or(LOGISTIC_FRICTION / xi),
            m.step.unwrap_or(LOGISTIC_STEP / (xi * l).sqrt()),
        ),
    };
    let dynamics = DynamicsParams::new(gamma, xi, step)?;
    let budget = match (m.iterations, m.budget_epochs) {
        (_, Some(e)) => Budget::Queries((e * n as f64).round() as u64),
        (Some(k), None) => Budget::Iterations(k),
        (None, None) => return Err(Error::Config(format!("{}: no budget", m.kind))),
    };
    let mut sampler = SamplerConfig::new(estimator, dynamics, budget);
    sampler.burn_in = m.burn_in;
    sampler.stride = config.stride;
    sampler.chains = m.chains;
    sampler.diagnostics = diagnostics;
    // every method draws from the same streams, so comparisons are paired
    // and b = N runs coincide with the full-gradient run
    sampler.seed = config.seed;
    sampler.validate(n, model.dim())?;

    let theta = mseb_descriptor(m.kind, n, m.batch, epoch).map(|d| d.theta());
    let bound_step = theta.map(|t| step_bound(l, kappa, t));
    Ok(ResolvedMethod {
        settings: m.clone(),
        epoch,
        step,
        gamma,
        xi,
        sampler,
        advisory: AdvisoryRow {
            method: m.kind.label().to_string(),
            batch: m.batch,
            epoch,
            theta,
            bound_step,
            step,
            exceeds: bound_step.map(|b| step > b),
        },
    })
}

/// Quadratic model for a synthetic config.
pub fn synthetic_model(settings: &SyntheticSettings) -> Result<QuadraticPotential> {
    QuadraticPotential::generate(settings.data_seed, settings.n, settings.d, settings.l, settings.m)
}

/// Dense Gaussian features with labels drawn from a logistic model around a
/// random weight vector.
pub fn synthetic_binary_dataset(seed: u64, n: usize, d: usize) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let scale = 1.0 / (d as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        // a shared factor correlates the features
        let common: f64 = rng.sample(StandardNormal);
        let row: Vec<(usize, f64)> = (0..d)
            .map(|j| (j, 0.5 * common + rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let margin: f64 = row.iter().map(|&(j, v)| 2.0 * scale * w[j] * v).sum();
        labels.push(if rng.random::<f64>() < sigmoid(margin) {
            1.0
        } else {
            -1.0
        });
        rows.push(row);
    }
    Dataset::new(d, rows, labels)
}

/// Training and test models for a logistic config.
pub fn logistic_models(settings: &LogisticSettings) -> Result<(LogisticPotential, LogisticPotential, Provenance)> {
    let dataset = match &settings.data {
        Some(path) => read_libsvm(path, settings.label_policy, settings.dim)?,
        None => synthetic_binary_dataset(settings.data_seed, 690, 14)?,
    };
    let provenance = dataset.provenance.clone();
    let (train, test) = split(&dataset, settings.split_ratio, settings.split_seed)?;
    let (train, test) = if settings.standardize {
        let (a, b, _) = standardize(&train, &test)?;
        (a, b)
    } else {
        (train, test)
    };
    Ok((
        LogisticPotential::from_dataset(&train, settings.prior)?,
        LogisticPotential::from_dataset(&test, settings.prior)?,
        provenance,
    ))
}

fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRow {
    pub method: String,
    pub batch: usize,
    pub epoch: usize,
    pub step: f64,
    pub gamma: f64,
    pub xi: f64,
    pub chains: usize,
    pub queries_per_chain: Option<f64>,
    pub potential_mse: Option<f64>,
    pub gradient_mse: Option<f64>,
    pub mean_q: Option<f64>,
    pub pooled_w2: Option<f64>,
    pub final_w2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n: usize,
    pub d: usize,
    pub smoothness: f64,
    pub strong_convexity: f64,
    pub condition_number: f64,
    pub mean_potential: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub config: ExperimentConfig,
    pub model: ModelSummary,
    pub advisory: Vec<AdvisoryRow>,
    pub methods: Vec<SyntheticRow>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn table_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into())
}

/// Runs every configured method on the quadratic model and writes
/// `<method>.csv`, `summary.json` and `table.txt` to the output directory.
/// A diverging method is reported in its row; the others still run.
pub fn run_synthetic(config: &ExperimentConfig) -> Result<SyntheticSummary> {
    let settings = config
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("synthetic settings missing".into()))?;
    let model = synthetic_model(settings)?;
    let (mean, cov) = model.target_moments();
    let target = GaussianSummary::new(mean, cov)?;
    let truth = model.mean_potential();
    let d = model.dim();

    let mut rows = Vec::new();
    let mut advisory = Vec::new();
    for m in &config.methods {
        let diagnostics = Diagnostics {
            // the comparison table reports gradient MSE, so the synthetic
            // study always records it at the stride
            gradient_error: true,
            q_metric: config.diagnostics,
            positions: m.chains > d,
            joint_moments: false,
        };
        let resolved = resolve_method(m, &model, config, diagnostics)?;
        advisory.push(resolved.advisory.clone());
        let mut row = SyntheticRow {
            method: m.kind.label().to_string(),
            batch: m.batch,
            epoch: resolved.epoch,
            step: resolved.step,
            gamma: resolved.gamma,
            xi: resolved.xi,
            chains: m.chains,
            queries_per_chain: None,
            potential_mse: None,
            gradient_mse: None,
            mean_q: None,
            pooled_w2: None,
            final_w2: None,
            error: None,
        };
        match run_ensemble(&resolved.sampler, &model) {
            Ok(mut ens) => {
                if diagnostics.positions {
                    ens.attach_w2(&target)?;
                }
                summarize_synthetic(&ens, &target, truth, &mut row)?;
                write_file(&config.out, &format!("{}.csv", m.kind.name()), &synthetic_csv(&ens))?;
            }
            Err(e @ Error::Divergence { .. }) => row.error = Some(e.to_string()),
            Err(e) => return Err(e),
        }
        rows.push(row);
    }

    let summary = SyntheticSummary {
        config: config.clone(),
        model: ModelSummary {
            n: model.n_components(),
            d,
            smoothness: model.smoothness(),
            strong_convexity: model.strong_convexity(),
            condition_number: model.condition_number(),
            mean_potential: Some(truth),
        },
        advisory,
        methods: rows,
    };
    write_file(
        &config.out,
        "summary.json",
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    write_file(&config.out, "table.txt", &synthetic_table(&summary.methods))?;
    Ok(summary)
}

fn summarize_synthetic(ens: &Ensemble, target: &GaussianSummary, truth: f64, row: &mut SyntheticRow) -> Result<()> {
    row.queries_per_chain = mean_of(ens.records.iter().map(|r| r.queries as f64));
    row.potential_mse = Some(potential_mse(&ens.records, truth)?);
    row.gradient_mse = mean_of(ens.records.iter().filter_map(|r| gradient_mse(r).ok()));
    row.mean_q = mean_of(ens.records.iter().flat_map(|r| r.post_burn_in().filter_map(|x| x.q_k)));
    row.pooled_w2 = match pooled_moments(&ens.records) {
        Ok(g) => Some(bures_w2(&g, target)?),
        Err(Error::TooFewSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    row.final_w2 = ens.aggregate.last().and_then(|a| a.w2);
    Ok(())
}

/// `iter,queries,potential,grad_err_sq,q_k,w2`, averaged over chains.
pub fn synthetic_csv(ens: &Ensemble) -> String {
    let mut out = String::from("iter,queries,potential,grad_err_sq,q_k,w2\n");
    for r in &ens.aggregate {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iter,
            r.queries,
            fmt_f64(r.potential),
            fmt_opt(r.grad_err_sq),
            fmt_opt(r.q_k),
            fmt_opt(r.w2)
        );
    }
    out
}

fn synthetic_table(rows: &[SyntheticRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.batch.to_string(),
                format!("{:.4e}", r.step),
                sci(r.potential_mse),
                sci(r.gradient_mse),
                sci(r.pooled_w2),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    table_text(
        &[
            "method",
            "b",
            "h",
            "potential_mse",
            "gradient_mse",
            "pooled_w2",
            "error",
        ],
        &body,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticRow {
    pub method: String,
    pub batch: usize,
    pub epoch: usize,
    pub step: f64,
    pub gamma: f64,
    pub xi: f64,
    pub chains: usize,
    pub query_budget: u64,
    /// Mean training potential over the last fifth of the query budget.
    pub tail_potential: Option<f64>,
    /// Mean test NLL over the last fifth of the query budget.
    pub tail_nll: Option<f64>,
    /// Mean squared gradient error over the same window; recorded only with
    /// diagnostics on.
    pub gradient_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticSummary {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub train: ModelSummary,
    pub test_rows: usize,
    pub advisory: Vec<AdvisoryRow>,
    pub methods: Vec<LogisticRow>,
}

/// Chain-averaged training potential and test NLL on the first chain's
/// query grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticSeries {
    pub iter: Vec<u64>,
    pub queries: Vec<u64>,
    pub potential: Vec<f64>,
    pub nll: Vec<f64>,
    pub grad_err_sq: Vec<Option<f64>>,
}

pub fn logistic_series(ens: &Ensemble, test: &LogisticPotential) -> Result<LogisticSeries> {
    let picks = query_alignment(&ens.records);
    let chains = ens.records.len() as f64;
    let mut nll = Vec::with_capacity(picks.len());
    for p in &picks {
        let mut total = 0.0;
        for (rec, &i) in ens.records.iter().zip(p) {
            let x = rec.positions.get(i).ok_or(Error::Empty("recorded positions"))?;
            total += test.likelihood_nll(x)?;
        }
        nll.push(total / chains);
    }
    Ok(LogisticSeries {
        iter: ens.aggregate.iter().map(|a| a.iter).collect(),
        queries: ens.aggregate.iter().map(|a| a.queries).collect(),
        potential: ens.aggregate.iter().map(|a| a.potential).collect(),
        nll,
        grad_err_sq: ens.aggregate.iter().map(|a| a.grad_err_sq).collect(),
    })
}

/// Runs every configured method on the training split and writes
/// `logistic.csv`, `summary.json` and `table.txt`.
pub fn run_logistic(config: &ExperimentConfig) -> Result<LogisticSummary> {
    let settings = config
        .logistic
        .as_ref()
        .ok_or_else(|| Error::Config("logistic settings missing".into()))?;
    let (train, test, provenance) = logistic_models(settings)?;

    let mut csv = String::from("method,iter,queries,potential,nll,grad_err_sq\n");
    let mut rows = Vec::new();
    let mut advisory = Vec::new();
    for m in &config.methods {
        let diagnostics = Diagnostics {
            gradient_error: config.diagnostics,
            q_metric: false,
            positions: true,
            joint_moments: false,
        };
        let resolved = resolve_method(m, &train, config, diagnostics)?;
        advisory.push(resolved.advisory.clone());
        let query_budget = match resolved.sampler.budget {
            Budget::Queries(q) => q,
            Budget::Iterations(_) => 0,
        };
        let mut row = LogisticRow {
            method: m.kind.label().to_string(),
            batch: m.batch,
            epoch: resolved.epoch,
            step: resolved.step,
            gamma: resolved.gamma,
            xi: resolved.xi,
            chains: m.chains,
            query_budget,
            tail_potential: None,
            tail_nll: None,
            gradient_mse: None,
            error: None,
        };
        match run_ensemble(&resolved.sampler, &train) {
            Ok(ens) => {
                let series = logistic_series(&ens, &test)?;
                let last = *series.queries.last().unwrap_or(&0) as f64;
                let tail: Vec<usize> = (0..series.queries.len())
                    .filter(|&i| series.queries[i] as f64 >= 0.8 * last)
                    .collect();
                row.tail_potential = mean_of(tail.iter().map(|&i| series.potential[i]));
                row.tail_nll = mean_of(tail.iter().map(|&i| series.nll[i]));
                // the tail window skips the start-up transient of the table
                // estimators, whose entries all start at ∇f_i(x_0)
                row.gradient_mse = mean_of(tail.iter().filter_map(|&i| series.grad_err_sq[i]));
                for i in 0..series.iter.len() {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{}",
                        m.kind.name(),
                        series.iter[i],
                        series.queries[i],
                        fmt_f64(series.potential[i]),
                        fmt_f64(series.nll[i]),
                        fmt_opt(series.grad_err_sq[i])
                    );
                }
            }
            Err(e @ Error::Divergence { .. }) => row.error = Some(e.to_string()),
            Err(e) => return Err(e),
        }
        rows.push(row);
    }

    let summary = LogisticSummary {
        config: config.clone(),
        provenance,
        train: ModelSummary {
            n: train.n_components(),
            d: train.dim(),
            smoothness: train.smoothness(),
            strong_convexity: train.strong_convexity(),
            condition_number: train.condition_number(),
            mean_potential: None,
        },
        test_rows: test.n_components(),
        advisory,
        methods: rows,
    };
    write_file(&config.out, "logistic.csv", &csv)?;
    write_file(
        &config.out,
        "summary.json",
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    let body: Vec<Vec<String>> = summary
        .methods
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.batch.to_string(),
                format!("{:.4e}", r.step),
                r.query_budget.to_string(),
                r.tail_potential
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "-".into()),
                r.tail_nll.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                sci(r.gradient_mse),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_file(
        &config.out,
        "table.txt",
        &table_text(
            &[
                "method",
                "b",
                "h",
                "queries",
                "train_potential",
                "test_nll",
                "gradient_mse",
                "error",
            ],
            &body,
        ),
    )?;
    Ok(summary)
}

/// Step-size advisory for every configured method, as rows and as text.
pub fn print_advisory(config: &ExperimentConfig) -> Result<(Vec<AdvisoryRow>, String)> {
    let model: Box<dyn Potential> = match config.kind {
        ExperimentKind::Synthetic => Box::new(synthetic_model(
            config
                .synthetic
                .as_ref()
                .ok_or_else(|| Error::Config("synthetic settings missing".into()))?,
        )?),
        ExperimentKind::Logistic => Box::new(
            logistic_models(
                config
                    .logistic
                    .as_ref()
                    .ok_or_else(|| Error::Config("logistic settings missing".into()))?,
            )?
            .0,
        ),
    };
    let mut rows = Vec::new();
    for m in &config.methods {
        rows.push(resolve_method(m, model.as_ref(), config, Diagnostics::default())?.advisory);
    }
    let mut text = format!(
        "N = {}, d = {}, L = {:.4}, m = {:.4}, kappa = {:.4}\nsufficient condition: L h <= (1/(10 kappa)) min(1, 1/sqrt(Theta))\n\n",
        model.n_components(),
        model.dim(),
        model.smoothness(),
        model.strong_convexity(),
        model.condition_number()
    );
    let body: Vec<Vec<String>> = rows
        .iter()
        .zip(&config.methods)
        .map(|(r, m)| {
            vec![
                r.method.clone(),
                r.batch.to_string(),
                if m.kind.uses_epoch() {
                    r.epoch.to_string()
                } else {
                    "-".into()
                },
                r.theta.map(fmt_f64).unwrap_or_else(|| "none".into()),
                r.bound_step
                    .map(|b| format!("{b:.4e}"))
                    .unwrap_or_else(|| "none".into()),
                format!("{:.4e}", r.step),
                match r.exceeds {
                    Some(true) => "exceeds bound".into(),
                    Some(false) => "within bound".into(),
                    None => "no MSEB constants".into(),
                },
            ]
        })
        .collect();
    text.push_str(&table_text(
        &["method", "b", "p", "Theta", "bound_h", "h", "status"],
        &body,
    ));
    Ok((rows, text))
}
