//! Multi-seed experiment orchestration, grid selection and result files.
//!
//! Within one experiment the noisy labels for seed `s` depend only on `s`
//! and the noise spec, so every method trains on identical corrupted labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{load_dataset, write_json, DatasetBundle};
use crate::error::{Error, Result};
use crate::gcn::{gcn_infer, GcnModel};
use crate::graph::normalize;
use crate::metrics::{accuracy, multilabel_prf, LabelQuality, MetricSplit};
use crate::noise::{build_transition, flip_labels, LabelSet, NoiseKind, NoiseSpec};
use crate::rng::{self, tags};
use crate::sbm::{gen_sbm, SbmParams};
use crate::train::{Method, TrainConfig, TrainTrace};

/// Where an experiment's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// A dataset directory on disk.
    Dir(PathBuf),
    /// A generated stochastic block model.
    Sbm(SbmParams),
}

impl DatasetSource {
    pub fn load(&self) -> Result<DatasetBundle> {
        match self {
            DatasetSource::Dir(path) => load_dataset(path),
            DatasetSource::Sbm(params) => gen_sbm(params),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSetting {
    pub kind: NoiseKind,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub noise: NoiseSetting,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Training-config field name → candidate values. The point with the
    /// highest mean (noisy) validation accuracy is reported per method.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub metric_split: MetricSplit,
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> Result<Self> {
        crate::dataset::read_json(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods listed".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds listed".into()));
        }
        if let Some((k, _)) = self.grid.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "grid entry {k:?} has no values"
            )));
        }
        for point in self.grid_points() {
            apply_overrides(&self.train, &point)?.validate()?;
        }
        self.train.validate()
    }

    /// Cartesian product of the grid; a single empty point when there is no grid.
    pub fn grid_points(&self) -> Vec<BTreeMap<String, Value>> {
        let mut points = vec![BTreeMap::new()];
        for (key, values) in &self.grid {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Returns `base` with the named fields replaced.
pub fn apply_overrides(
    base: &TrainConfig,
    overrides: &BTreeMap<String, Value>,
) -> Result<TrainConfig> {
    let mut value = serde_json::to_value(base).expect("config serializes");
    let map = value.as_object_mut().expect("config is an object");
    for (k, v) in overrides {
        if !map.contains_key(k) {
            return Err(Error::InvalidConfig(format!(
                "unknown training field {k:?}"
            )));
        }
        map.insert(k.clone(), v.clone());
    }
    serde_json::from_value(value)
        .map_err(|e| Error::InvalidConfig(format!("bad training override: {e}")))
}

/// The noisy labels every method sees for `seed`: train and validation
/// labels pass through the transition matrix; test nodes are unlabeled.
pub fn inject_noise(bundle: &DatasetBundle, noise: NoiseSetting, seed: u64) -> Result<LabelSet> {
    let spec = NoiseSpec::new(noise.kind, noise.tau, bundle.meta.num_classes)?;
    let transition = build_transition(&spec)?;
    let labeled = bundle.clean_labels.restrict(&bundle.splits.labeled());
    flip_labels(
        &labeled,
        &transition,
        &mut rng::stream(rng::derive_seed(seed, tags::NOISE)),
    )
}

pub fn metric_indices(bundle: &DatasetBundle, split: MetricSplit) -> Vec<usize> {
    let n = bundle.meta.num_nodes;
    match split {
        MetricSplit::All => bundle.splits.non_train(n),
        MetricSplit::Test => bundle.splits.test.clone(),
        MetricSplit::Unlabeled => {
            let mut labeled = vec![false; n];
            for i in bundle.splits.labeled() {
                labeled[i] = true;
            }
            (0..n).filter(|&i| !labeled[i]).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation (0 for a single value).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

/// Outcome of one (method, seed) training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub refresh_count: usize,
    pub warmup_seconds: f64,
    pub gather_seconds: f64,
    pub total_seconds: f64,
    pub label_quality: Option<LabelQuality>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub warmup: MeanStd,
    pub gather: MeanStd,
    pub total: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub test_accuracy: Option<MeanStd>,
    pub val_accuracy: Option<MeanStd>,
    pub wall_time_seconds: Option<WallTimes>,
    pub label_quality: Option<LabelQuality>,
    pub label_quality_std: Option<LabelQuality>,
    /// Grid overrides that produced this result (empty without a grid).
    pub grid_point: BTreeMap<String, Value>,
    /// The training configuration after method adjustments and overrides.
    pub config: TrainConfig,
    pub runs: Vec<SeedRun>,
    /// One message per failed seed; the other seeds are still aggregated.
    pub errors: Vec<String>,
}

/// Trains `method` once and scores the best-validation model on clean test
/// labels. Returns the trace alongside for callers that want to persist it.
pub fn run_seed(
    bundle: &DatasetBundle,
    method: Method,
    noise: NoiseSetting,
    cfg: &TrainConfig,
    seed: u64,
    metric_split: MetricSplit,
) -> Result<(SeedRun, TrainTrace)> {
    let noisy = inject_noise(bundle, noise, seed)?;
    let cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let (run, _, trace) = train_and_score(bundle, method, &noisy, &cfg, metric_split)?;
    Ok((run, trace))
}

/// Clean-label accuracy of `model` on the test split.
pub fn test_accuracy(bundle: &DatasetBundle, model: &GcnModel) -> Result<f64> {
    let preds = gcn_infer(model, &normalize(&bundle.graph), &bundle.features)?.argmax_rows();
    accuracy(&preds, &bundle.clean_labels, &bundle.splits.test)
}

/// Trains `method` on already corrupted labels with `cfg.seed` and scores the
/// result like [`run_seed`].
pub fn train_and_score(
    bundle: &DatasetBundle,
    method: Method,
    noisy: &LabelSet,
    cfg: &TrainConfig,
    metric_split: MetricSplit,
) -> Result<(SeedRun, GcnModel, TrainTrace)> {
    let (model, trace) = method.train(
        &bundle.graph,
        &bundle.features,
        noisy,
        &bundle.splits,
        cfg,
        Some(bundle.meta.num_classes),
    )?;
    let test_accuracy = test_accuracy(bundle, &model)?;
    let label_quality = match &trace.best_labels {
        Some(labels) => {
            let idx = metric_indices(bundle, metric_split);
            multilabel_prf(labels, &bundle.clean_labels, &idx).ok()
        }
        None => None,
    };
    let run = SeedRun {
        seed: cfg.seed,
        test_accuracy,
        best_val_accuracy: trace.best_val_accuracy,
        best_epoch: trace.best_epoch,
        refresh_count: trace.refresh_count,
        warmup_seconds: trace.times.warmup,
        gather_seconds: trace.times.gather,
        total_seconds: trace.times.total,
        label_quality,
        warnings: trace.warnings.clone(),
    };
    Ok((run, model, trace))
}

fn mean_quality(runs: &[SeedRun]) -> (Option<LabelQuality>, Option<LabelQuality>) {
    let qs: Vec<LabelQuality> = runs.iter().filter_map(|r| r.label_quality).collect();
    let stat = |f: fn(&LabelQuality) -> f64| MeanStd::of(&qs.iter().map(f).collect::<Vec<_>>());
    match (
        stat(|q| q.precision),
        stat(|q| q.recall),
        stat(|q| q.f1),
        stat(|q| q.coverage),
    ) {
        (Some(p), Some(r), Some(f), Some(c)) => (
            Some(LabelQuality {
                precision: p.mean,
                recall: r.mean,
                f1: f.mean,
                coverage: c.mean,
            }),
            Some(LabelQuality {
                precision: p.std,
                recall: r.std,
                f1: f.std,
                coverage: c.std,
            }),
        ),
        _ => (None, None),
    }
}

/// Runs `method` over `seeds` and aggregates. With `out` set, each seed's
/// `trace.csv` and `metrics.json` go to `out/<method>/seed-<s>/`.
pub fn run_method(
    bundle: &DatasetBundle,
    method: Method,
    noise: NoiseSetting,
    cfg: &TrainConfig,
    seeds: &[u64],
    metric_split: MetricSplit,
    out: Option<&Path>,
) -> RunResult {
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for &seed in seeds {
        let outcome =
            run_seed(bundle, method, noise, cfg, seed, metric_split).and_then(|(run, trace)| {
                if let Some(dir) = out {
                    let dir = dir.join(method.name()).join(format!("seed-{seed}"));
                    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    trace.write_csv(&dir.join("trace.csv"))?;
                    write_json(&dir.join("metrics.json"), &run)?;
                }
                Ok(run)
            });
        match outcome {
            Ok(run) => {
                info!(
                    "{method} seed {seed}: test {:.4} (val {:.4}, {:.2}s)",
                    run.test_accuracy, run.best_val_accuracy, run.total_seconds
                );
                runs.push(run);
            }
            Err(e) => {
                warn!("{method} seed {seed} failed: {e}");
                errors.push(format!("seed {seed}: {e}"));
            }
        }
    }
    let collect = |f: fn(&SeedRun) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let wall_time_seconds = match (
        MeanStd::of(&collect(|r| r.warmup_seconds)),
        MeanStd::of(&collect(|r| r.gather_seconds)),
        MeanStd::of(&collect(|r| r.total_seconds)),
    ) {
        (Some(warmup), Some(gather), Some(total)) => Some(WallTimes {
            warmup,
            gather,
            total,
        }),
        _ => None,
    };
    let (label_quality, label_quality_std) = mean_quality(&runs);
    RunResult {
        method,
        seeds: seeds.to_vec(),
        test_accuracy: MeanStd::of(&collect(|r| r.test_accuracy)),
        val_accuracy: MeanStd::of(&collect(|r| r.best_val_accuracy)),
        wall_time_seconds,
        label_quality,
        label_quality_std,
        grid_point: BTreeMap::new(),
        config: method.resolve(cfg),
        runs,
        errors,
    }
}

/// Every method at every grid point; per method, the point with the best
/// mean validation accuracy is selected (earliest point on ties).
pub fn run_experiment_config(
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<Vec<RunResult>> {
    config.validate()?;
    let bundle = config.dataset.load()?;
    let points = config.grid_points();
    let mut results = Vec::new();
    for &method in &config.methods {
        let mut best: Option<RunResult> = None;
        for point in &points {
            let cfg = apply_overrides(&config.train, point)?;
            // Per-seed files only for the single-point case; a grid would
            // overwrite them point by point.
            let run_out = if points.len() == 1 { out } else { None };
            let mut result = run_method(
                &bundle,
                method,
                config.noise,
                &cfg,
                &config.seeds,
                config.metric_split,
                run_out,
            );
            result.grid_point = point.clone();
            let score = |r: &RunResult| r.val_accuracy.map_or(f64::NEG_INFINITY, |v| v.mean);
            if best.as_ref().is_none_or(|b| score(&result) > score(b)) {
                best = Some(result);
            }
        }
        results.push(best.expect("at least one grid point"));
    }
    if let Some(dir) = out {
        write_results(dir, config, &results)?;
    }
    Ok(results)
}

pub fn run_experiment(config_file: &Path, out: Option<&Path>) -> Result<Vec<RunResult>> {
    run_experiment_config(&ExperimentConfig::read(config_file)?, out)
}

#[derive(Serialize)]
struct ResultsFile<'a> {
    config: &'a ExperimentConfig,
    results: &'a [RunResult],
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `results.json` (full config plus every result) and `results.csv` (one row
/// per method; the resolved config is embedded as a JSON column).
pub fn write_results(dir: &Path, config: &ExperimentConfig, results: &[RunResult]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("results.json"), &ResultsFile { config, results })?;
    let mut csv = String::from(
        "method,seeds,test_acc_mean,test_acc_std,val_acc_mean,time_total_mean,time_gather_mean,precision,recall,f1,coverage,errors,config\n",
    );
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in results {
        let q = r.label_quality;
        let t = r.wall_time_seconds.as_ref();
        let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
        let resolved = serde_json::json!({
            "dataset": config.dataset,
            "noise": config.noise,
            "metric_split": config.metric_split,
            "train": r.config,
            "grid_point": r.grid_point,
        });
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            seeds.join(" "),
            fmt(r.test_accuracy.map(|m| m.mean)),
            fmt(r.test_accuracy.map(|m| m.std)),
            fmt(r.val_accuracy.map(|m| m.mean)),
            fmt(t.map(|t| t.total.mean)),
            fmt(t.map(|t| t.gather.mean)),
            fmt(q.map(|q| q.precision)),
            fmt(q.map(|q| q.recall)),
            fmt(q.map(|q| q.f1)),
            fmt(q.map(|q| q.coverage)),
            r.errors.len(),
            csv_field(&resolved.to_string()),
        );
    }
    let path = dir.join("results.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}
