//! Experiment runner behind the `hlr` command-line tool.
//!
//! A run is described by an [`ExperimentConfig`] (TOML, unknown keys
//! rejected). [`ExperimentConfig::resolve`] fills in every default and the
//! result is echoed verbatim in the [`Report`], so a report alone is enough to
//! rerun an experiment.
//!
//! Randomized tasks derive one seed per repetition with [`Seed::child`];
//! repetition `r` trains on data drawn from `child(r)` and is evaluated on a
//! clean held-out set drawn from `child(r).child(1)`. Repetitions may run in
//! parallel and are reported in index order, so metric values never depend on
//! the thread count. Wall-clock timings live in a separate report section.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::quadratic_mr;
use crate::data::{
    corrupt_sign_flip, flip_binary_labels, gen_binary_separable, gen_linear_uniform, load_csv, mask_labels,
    random_direction, split_folds, Dataset, Keep, MultiViewSample, Seed,
};
use crate::error::{HlrError, Result};
use crate::hlr::{fit_with_gram, sign, HlrConfig, HlrModel};
use crate::kernels::{build_gram, KernelSpec};
use crate::loss::{dice, mae, mse, mre};
use crate::manifold::{assemble_manifold, load_matrix_csv, AdjacencySpec, ViewManifold};
use crate::model_io::{load_model, save_model};

pub const REPORT_FORMAT: &str = "hlr-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Fit,
    Predict,
    SynthLinear,
    NoisyCurve,
    NoisyBinary,
    FoldsBench,
}

impl Task {
    fn is_synthetic(self) -> bool {
        matches!(self, Task::SynthLinear | Task::NoisyCurve | Task::NoisyBinary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// λ = 1e−3, γ = 1e−4, Δξ = 0.01, T = 3.
    PaperUci,
    /// λ = 1e−2, γ = 1e−3, Δξ = 0.1, T = 1.
    PaperSynth,
}

impl Preset {
    fn config(self, n_views: usize) -> HlrConfig {
        match self {
            Preset::PaperUci => HlrConfig::paper_uci(n_views),
            Preset::PaperSynth => HlrConfig::paper_synth(n_views),
        }
    }
}

/// Individual overrides of the preset's learner parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HlrOverrides {
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub delta_xi: Option<f64>,
    pub refinements: Option<usize>,
    pub view_weights: Option<Vec<f64>>,
}

/// Manifold operator used for every view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ManifoldConfig {
    /// k-nearest-neighbour graph Laplacian per view.
    Graph {
        #[serde(default = "default_neighbors")]
        neighbors: usize,
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default = "default_true")]
        normalized: bool,
    },
    /// No manifold term.
    Zero,
    /// One `n × n` CSV matrix per view, aligned with the training rows.
    Explicit { paths: Vec<PathBuf> },
}

fn default_neighbors() -> usize {
    crate::manifold::DEFAULT_NEIGHBORS
}

fn default_true() -> bool {
    true
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig::Graph {
            neighbors: default_neighbors(),
            bandwidth: None,
            normalized: true,
        }
    }
}

/// Data source and generator parameters. Only the keys relevant to the task
/// are used; the resolved echo drops the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Training samples drawn per repetition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Linear model coefficients; defaults to `[1/d, …, 1/d]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// Standard deviation of additive Gaussian label noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    /// Size of the clean held-out evaluation set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    /// Fraction of labels whose sign is inverted (noisy-curve).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_minus: Option<f64>,
    /// Fraction of training labels kept; the rest become unlabelled inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labelled_fraction: Option<f64>,
    /// Labelled training CSV (fit, folds-bench).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    /// Query CSV (predict).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Whether the query CSV has a trailing label column.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labelled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
}

/// User-facing configuration; every field but `task` is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub repetitions: Option<usize>,
    /// Worker threads; 0 lets the pool pick.
    pub threads: Option<usize>,
    /// Report destination (JSON).
    pub output: Option<PathBuf>,
    /// Optional `truth,prediction` CSV.
    pub predictions: Option<PathBuf>,
    /// Model file written by `fit` and read by `predict`.
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub hlr: HlrOverrides,
    pub kernels: Option<Vec<KernelSpec>>,
    pub manifold: Option<ManifoldConfig>,
    #[serde(default)]
    pub data: DataConfig,
}

/// Fully resolved configuration, echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub task: Task,
    pub preset: Preset,
    pub seed: u64,
    pub repetitions: usize,
    pub threads: usize,
    pub output: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub hlr: HlrConfig,
    pub kernels: Vec<KernelSpec>,
    pub manifold: ManifoldConfig,
    pub data: DataConfig,
}

/// Refinement budget for `noisy-curve` when neither a preset nor an explicit
/// count is given: large enough that the loop runs until the threshold is
/// exhausted.
pub const CURVE_REFINEMENTS: usize = 50;

/// Refinement budget for `noisy-binary` under the same conditions. With ±1
/// targets clean points near the decision boundary also carry errors close
/// to 1, so a long loop ends up discarding them; a short one stops after
/// the grossly flipped labels.
pub const BINARY_REFINEMENTS: usize = 3;

fn config_err(msg: impl Into<String>) -> HlrError {
    HlrError::Config(msg.into())
}

fn require<T: Clone>(value: &Option<T>, key: &str, task: Task) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| config_err(format!("task {task:?} requires `{key}`")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    /// Fills in defaults and validates everything that can be checked
    /// without touching data files.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let task = self.task;
        let mut data = DataConfig::default();
        let src = &self.data;
        let n_views = match task {
            Task::SynthLinear | Task::NoisyCurve | Task::NoisyBinary => {
                let d = src.d.unwrap_or(match task {
                    Task::NoisyBinary => 5,
                    _ => 10,
                });
                if d == 0 {
                    return Err(config_err("`data.d` must be positive"));
                }
                data.d = Some(d);
                data.n = Some(src.n.unwrap_or(match task {
                    Task::SynthLinear => 100,
                    Task::NoisyCurve => 500,
                    _ => 200,
                }));
                data.n_test = Some(src.n_test.unwrap_or(match task {
                    Task::NoisyBinary => 1000,
                    _ => 500,
                }));
                data.labelled_fraction = Some(src.labelled_fraction.unwrap_or(1.0));
                if task != Task::NoisyBinary {
                    let beta = src.beta.clone().unwrap_or_else(|| vec![1.0 / d as f64; d]);
                    if beta.len() != d {
                        return Err(config_err(format!("`data.beta` has {} entries, d = {d}", beta.len())));
                    }
                    data.beta = Some(beta);
                    data.noise_std = Some(src.noise_std.unwrap_or(0.0));
                }
                match task {
                    Task::NoisyCurve => data.rate = Some(src.rate.unwrap_or(0.1)),
                    Task::NoisyBinary => {
                        data.rho_plus = Some(src.rho_plus.unwrap_or(0.2));
                        data.rho_minus = Some(src.rho_minus.unwrap_or(0.2));
                    }
                    _ => {}
                }
                1
            }
            Task::Fit | Task::FoldsBench => {
                data.train = Some(require(&src.train, "data.train", task)?);
                let dims = require(&src.view_dims, "data.view_dims", task)?;
                if dims.is_empty() || dims.contains(&0) {
                    return Err(config_err(format!("invalid `data.view_dims` {dims:?}")));
                }
                data.view_dims = Some(dims.clone());
                data.labelled_fraction = Some(src.labelled_fraction.unwrap_or(1.0));
                if task == Task::FoldsBench {
                    let folds = src.folds.unwrap_or(5);
                    if folds < 2 {
                        return Err(config_err("`data.folds` must be at least 2"));
                    }
                    data.folds = Some(folds);
                }
                dims.len()
            }
            Task::Predict => {
                data.test = Some(require(&src.test, "data.test", task)?);
                data.labelled = Some(src.labelled.unwrap_or(true));
                // view layout comes from the model file
                0
            }
        };
        for (key, v) in [
            ("data.labelled_fraction", data.labelled_fraction),
            ("data.rate", data.rate),
            ("data.rho_plus", data.rho_plus),
            ("data.rho_minus", data.rho_minus),
        ] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(config_err(format!("`{key}` must lie in [0, 1], got {v}")));
                }
            }
        }
        if let Some(s) = data.noise_std {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(config_err(format!("`data.noise_std` must be >= 0, got {s}")));
            }
        }
        if task == Task::Fit || task == Task::Predict {
            if self.model.is_none() {
                return Err(config_err(format!("task {task:?} requires `model`")));
            }
        }

        let preset = self.preset.unwrap_or(if task.is_synthetic() {
            Preset::PaperSynth
        } else {
            Preset::PaperUci
        });
        let mut hlr = preset.config(n_views.max(1));
        if self.preset.is_none() {
            match task {
                Task::NoisyCurve => hlr.refinements = CURVE_REFINEMENTS,
                Task::NoisyBinary => hlr.refinements = BINARY_REFINEMENTS,
                _ => {}
            }
        }
        let o = &self.hlr;
        if let Some(v) = o.lambda {
            hlr.lambda = v;
        }
        if let Some(v) = o.gamma {
            hlr.gamma = v;
        }
        if let Some(v) = o.delta_xi {
            hlr.delta_xi = v;
        }
        if let Some(v) = o.refinements {
            hlr.refinements = v;
        }
        if let Some(c) = &o.view_weights {
            hlr.view_weights = c.clone();
        }
        let kernels = self
            .kernels
            .clone()
            .unwrap_or_else(|| vec![KernelSpec::Linear; n_views]);
        if task != Task::Predict {
            hlr.validate(n_views).map_err(|e| config_err(e.to_string()))?;
            if kernels.len() != n_views {
                return Err(config_err(format!("{} kernels for {n_views} views", kernels.len())));
            }
            for k in &kernels {
                k.validate().map_err(|e| config_err(e.to_string()))?;
            }
        }
        let manifold = self.manifold.clone().unwrap_or_default();
        match &manifold {
            ManifoldConfig::Graph { neighbors, bandwidth, .. } => {
                if *neighbors == 0 {
                    return Err(config_err("`manifold.neighbors` must be positive"));
                }
                if let Some(b) = bandwidth {
                    if !(*b > 0.0 && b.is_finite()) {
                        return Err(config_err("`manifold.bandwidth` must be > 0"));
                    }
                }
            }
            ManifoldConfig::Explicit { paths } => {
                if task.is_synthetic() || task == Task::FoldsBench {
                    return Err(config_err("explicit manifold matrices are only supported by `fit`"));
                }
                if task == Task::Fit && paths.len() != n_views {
                    return Err(config_err(format!("{} manifold matrices for {n_views} views", paths.len())));
                }
            }
            ManifoldConfig::Zero => {}
        }
        let repetitions = match task {
            Task::Fit | Task::Predict | Task::FoldsBench => 1,
            _ => self.repetitions.unwrap_or(1),
        };
        if repetitions == 0 {
            return Err(config_err("`repetitions` must be positive"));
        }
        Ok(ResolvedConfig {
            task,
            preset,
            seed: self.seed.unwrap_or(0),
            repetitions,
            threads: self.threads.unwrap_or(0),
            output: self.output.clone(),
            predictions: self.predictions.clone(),
            model: self.model.clone(),
            hlr,
            kernels,
            manifold,
            data,
        })
    }
}

/// Metrics of one repetition or fold. `None` marks an undefined value
/// (explained in `warnings`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: Option<u64>,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub xi_history: Vec<f64>,
    pub removed: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub run_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub artifact_version: String,
    pub config: ResolvedConfig,
    pub runs: Vec<RunRecord>,
    /// Per-metric summary over the runs where the metric is defined.
    pub aggregate: BTreeMap<String, Summary>,
    pub timings: Timings,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| HlrError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HlrError::Format(e.to_string()))
    }

    /// Everything except the timings, for determinism comparisons.
    pub fn deterministic_part(&self) -> Result<String> {
        serde_json::to_string(&(&self.config, &self.runs, &self.aggregate))
            .map_err(|e| HlrError::Format(e.to_string()))
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregate.get(metric).map(|s| s.mean)
    }
}

fn aggregate(runs: &[RunRecord]) -> BTreeMap<String, Summary> {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (k, v) in &r.metrics {
            let entry = values.entry(k.clone()).or_default();
            if let Some(v) = v {
                entry.push(*v);
            }
        }
    }
    values
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (k, Summary { mean, std, count: v.len() })
        })
        .collect()
}

/// Output of one repetition before report assembly.
struct RunOutput {
    record: RunRecord,
    predictions: Vec<(Option<f64>, f64)>,
    seconds: f64,
}

fn view_manifolds(cfg: &ResolvedConfig, n_views: usize) -> Result<Vec<ViewManifold>> {
    Ok(match &cfg.manifold {
        ManifoldConfig::Graph {
            neighbors,
            bandwidth,
            normalized,
        } => vec![
            ViewManifold::Graph(AdjacencySpec {
                neighbors: *neighbors,
                bandwidth: *bandwidth,
                normalized: *normalized,
            });
            n_views
        ],
        ManifoldConfig::Zero => vec![ViewManifold::Zero; n_views],
        ManifoldConfig::Explicit { paths } => paths
            .iter()
            .map(|p| load_matrix_csv(p).map(ViewManifold::Explicit))
            .collect::<Result<_>>()?,
    })
}

/// Fits the Huber learner and, when `with_baseline` is set, the quadratic
/// baseline on the same Gram and manifold operators.
fn train(cfg: &ResolvedConfig, ds: &Dataset, with_baseline: bool) -> Result<(HlrModel, Option<HlrModel>)> {
    let gram = build_gram(&cfg.kernels, ds.samples())?;
    let manifold = assemble_manifold(ds, &view_manifolds(cfg, ds.n_views())?)?;
    let model = fit_with_gram(ds, &cfg.kernels, &gram, &manifold, &cfg.hlr)?;
    let baseline = if with_baseline {
        Some(quadratic_mr(ds, &cfg.kernels, &gram, &manifold, &cfg.hlr)?)
    } else {
        None
    };
    Ok((model, baseline))
}

fn apply_label_fraction(ds: &Dataset, fraction: f64, seed: Seed) -> Result<Dataset> {
    if fraction >= 1.0 {
        Ok(ds.clone())
    } else {
        mask_labels(ds, &Keep::Fraction(fraction), seed)
    }
}

fn clean_targets(samples: &[MultiViewSample], beta: &[f64]) -> Vec<f64> {
    samples
        .iter()
        .map(|s| s.views[0].iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect()
}

fn record(index: usize, seed: Option<u64>, model: &HlrModel) -> RunRecord {
    RunRecord {
        index,
        seed,
        metrics: BTreeMap::new(),
        xi_history: model.xi_history.clone(),
        removed: model.removed.len(),
        warnings: Vec::new(),
    }
}

fn accuracy(truth: &[f64], pred: &[f64]) -> f64 {
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    hits as f64 / truth.len().max(1) as f64
}

fn run_linear(cfg: &ResolvedConfig, rep: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let seed = Seed(cfg.seed).child(rep as u64);
    let d = &cfg.data;
    let (n, dim, n_test) = (d.n.unwrap_or(0), d.d.unwrap_or(0), d.n_test.unwrap_or(0));
    let beta = d.beta.clone().unwrap_or_default();
    let clean = gen_linear_uniform(n, dim, &beta, d.noise_std.unwrap_or(0.0), seed)?;
    let test = gen_linear_uniform(n_test, dim, &beta, 0.0, seed.child(1))?;
    let truth = clean_targets(test.samples(), &beta);

    let (train_set, corrupted) = if cfg.task == Task::NoisyCurve {
        let (ds, c) = corrupt_sign_flip(&clean, d.rate.unwrap_or(0.0), seed)?;
        (ds, Some(c))
    } else {
        (clean, None)
    };
    let train_set = apply_label_fraction(&train_set, d.labelled_fraction.unwrap_or(1.0), seed)?;
    let (model, baseline) = train(cfg, &train_set, true)?;
    let baseline = baseline.expect("baseline requested");
    let pred = model.predict_many(test.samples())?;
    let base_pred = baseline.predict_many(test.samples())?;

    let mut rec = record(rep, Some(seed.0), &model);
    rec.metrics.insert("hlr_reconstruction_mae".into(), Some(mae(&truth, &pred)?));
    rec.metrics.insert("quadratic_reconstruction_mae".into(), Some(mae(&truth, &base_pred)?));
    rec.metrics.insert("hlr_reconstruction_mse".into(), Some(mse(&truth, &pred)?));
    rec.metrics.insert("final_xi".into(), Some(model.final_xi()));
    rec.metrics.insert("removed".into(), Some(model.removed.len() as f64));
    if let Some(corrupted) = corrupted {
        rec.metrics.insert("dice".into(), Some(dice(&corrupted, &model.removed_set())));
        rec.metrics.insert("corrupted".into(), Some(corrupted.len() as f64));
    }
    Ok(RunOutput {
        record: rec,
        predictions: truth.into_iter().map(Some).zip(pred).collect(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_binary(cfg: &ResolvedConfig, rep: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let seed = Seed(cfg.seed).child(rep as u64);
    let d = &cfg.data;
    let direction = random_direction(d.d.unwrap_or(0), seed);
    let clean = gen_binary_separable(d.n.unwrap_or(0), &direction, seed)?;
    let noisy = flip_binary_labels(&clean, d.rho_plus.unwrap_or(0.0), d.rho_minus.unwrap_or(0.0), seed)?;
    let flipped: BTreeSet<usize> = (0..clean.n()).filter(|&i| clean.label(i) != noisy.label(i)).collect();
    let noisy = apply_label_fraction(&noisy, d.labelled_fraction.unwrap_or(1.0), seed)?;
    let test = gen_binary_separable(d.n_test.unwrap_or(0), &direction, seed.child(1))?;
    let truth = test.labelled_values();

    let (model, baseline) = train(cfg, &noisy, true)?;
    let baseline = baseline.expect("baseline requested");
    let pred: Vec<f64> = model.predict_many(test.samples())?.into_iter().map(sign).collect();
    let base_pred: Vec<f64> = baseline.predict_many(test.samples())?.into_iter().map(sign).collect();

    let mut rec = record(rep, Some(seed.0), &model);
    rec.metrics.insert("hlr_accuracy".into(), Some(accuracy(&truth, &pred)));
    rec.metrics.insert("quadratic_accuracy".into(), Some(accuracy(&truth, &base_pred)));
    rec.metrics.insert("flipped".into(), Some(flipped.len() as f64));
    rec.metrics.insert("removed".into(), Some(model.removed.len() as f64));
    rec.metrics.insert("dice".into(), Some(dice(&flipped, &model.removed_set())));
    Ok(RunOutput {
        record: rec,
        predictions: truth.into_iter().map(Some).zip(pred).collect(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// MAE, MSE and MRE, with MRE left undefined (plus a warning) when a target
/// is zero.
fn regression_metrics(rec: &mut RunRecord, truth: &[f64], pred: &[f64]) -> Result<()> {
    rec.metrics.insert("mae".into(), Some(mae(truth, pred)?));
    rec.metrics.insert("mse".into(), Some(mse(truth, pred)?));
    let rel = match mre(truth, pred) {
        Ok(v) => Some(v),
        Err(e @ HlrError::Divergence { .. }) => {
            rec.warnings.push(e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    rec.metrics.insert("mre".into(), rel);
    Ok(())
}

fn load_training(cfg: &ResolvedConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let ds = load_csv(
        d.train.as_ref().expect("resolved"),
        d.view_dims.as_ref().expect("resolved"),
        true,
    )?;
    apply_label_fraction(&ds, d.labelled_fraction.unwrap_or(1.0), Seed(cfg.seed))
}

fn run_fold(cfg: &ResolvedConfig, fold: usize, train_set: &Dataset, test: &Dataset) -> Result<RunOutput> {
    let start = Instant::now();
    let (model, _) = train(cfg, train_set, false)?;
    let truth = test.labelled_values();
    let pred = model.predict_many(test.samples())?;
    let mut rec = record(fold, None, &model);
    regression_metrics(&mut rec, &truth, &pred)?;
    rec.metrics.insert("removed".into(), Some(model.removed.len() as f64));
    Ok(RunOutput {
        record: rec,
        predictions: truth.into_iter().map(Some).zip(pred).collect(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_fit(cfg: &ResolvedConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let ds = load_training(cfg)?;
    let (model, _) = train(cfg, &ds, false)?;
    save_model(&model, cfg.model.as_ref().expect("resolved"))?;
    let idx = ds.labelled_indices();
    let truth = ds.labelled_values();
    let pred = idx
        .iter()
        .map(|&i| model.predict(&ds.samples()[i]))
        .collect::<Result<Vec<f64>>>()?;
    let mut rec = record(0, None, &model);
    regression_metrics(&mut rec, &truth, &pred)?;
    rec.metrics.insert("removed".into(), Some(model.removed.len() as f64));
    rec.metrics.insert("final_xi".into(), Some(model.final_xi()));
    Ok(RunOutput {
        record: rec,
        predictions: truth.into_iter().map(Some).zip(pred).collect(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_predict(cfg: &ResolvedConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let model = load_model(cfg.model.as_ref().expect("resolved"))?;
    let dims = model
        .support
        .first()
        .map(MultiViewSample::view_dims)
        .ok_or_else(|| HlrError::Format("model has no support samples".into()))?;
    let labelled = cfg.data.labelled.unwrap_or(true);
    let ds = load_csv(cfg.data.test.as_ref().expect("resolved"), &dims, labelled)?;
    let pred = model.predict_many(ds.samples())?;
    let truth = ds.optional_labels();
    let mut rec = RunRecord {
        index: 0,
        seed: None,
        metrics: BTreeMap::new(),
        xi_history: model.xi_history.clone(),
        removed: model.removed.len(),
        warnings: Vec::new(),
    };
    if ds.n_labelled() > 0 {
        let idx = ds.labelled_indices();
        let t: Vec<f64> = idx.iter().map(|&i| truth[i].expect("labelled")).collect();
        let p: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
        regression_metrics(&mut rec, &t, &p)?;
    }
    Ok(RunOutput {
        record: rec,
        predictions: truth.into_iter().zip(pred).collect(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config_err(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Writes a `truth,prediction` CSV; unknown truths are left empty.
pub fn write_predictions<W: Write>(rows: &[(Option<f64>, f64)], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "truth,prediction")?;
    for (t, p) in rows {
        match t {
            Some(t) => writeln!(w, "{t},{p}")?,
            None => writeln!(w, ",{p}")?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs a resolved experiment, writing the report and predictions CSV when
/// their paths are set.
///
/// The predictions CSV holds the first repetition for synthetic tasks, the
/// concatenated test folds for `folds-bench`, and every query for `predict`.
pub fn run(cfg: &ResolvedConfig) -> Result<Report> {
    let start = Instant::now();
    let outputs: Vec<RunOutput> = match cfg.task {
        Task::SynthLinear | Task::NoisyCurve | Task::NoisyBinary => in_pool(cfg.threads, || {
            (0..cfg.repetitions)
                .into_par_iter()
                .map(|r| match cfg.task {
                    Task::NoisyBinary => run_binary(cfg, r),
                    _ => run_linear(cfg, r),
                })
                .collect::<Result<Vec<_>>>()
        })??,
        Task::FoldsBench => {
            let ds = load_training(cfg)?;
            let folds = split_folds(&ds, cfg.data.folds.unwrap_or(5))?;
            in_pool(cfg.threads, || {
                folds
                    .par_iter()
                    .enumerate()
                    .map(|(k, (tr, te))| run_fold(cfg, k, tr, te))
                    .collect::<Result<Vec<_>>>()
            })??
        }
        Task::Fit => vec![in_pool(cfg.threads, || run_fit(cfg))??],
        Task::Predict => vec![run_predict(cfg)?],
    };

    if let Some(path) = &cfg.predictions {
        let rows: Vec<(Option<f64>, f64)> = match cfg.task {
            Task::FoldsBench => outputs.iter().flat_map(|o| o.predictions.iter().copied()).collect(),
            _ => outputs[0].predictions.clone(),
        };
        write_predictions(&rows, File::create(path)?)?;
    }
    let runs: Vec<RunRecord> = outputs.iter().map(|o| o.record.clone()).collect();
    let report = Report {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        aggregate: aggregate(&runs),
        runs,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
            run_seconds: outputs.iter().map(|o| o.seconds).collect(),
        },
    };
    if let Some(path) = &cfg.output {
        let mut f = File::create(path)?;
        f.write_all(report.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
    }
    Ok(report)
}
