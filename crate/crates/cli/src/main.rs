//! Command-line front end: dataset generation, noise injection, training,
//! evaluation, benchmarking and hyperparameter sweeps.
//!
//! Exit codes: 0 on success, 1 when the input fails validation, 2 on any
//! other runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use legnn::bench::{bench_gather_scaling, bench_overhead, scaling_graph, BenchConfig};
use legnn::dataset::{
    load_dataset, read_json, read_label_column, write_dataset, write_json, write_label_column,
};
use legnn::ensemble::MultiLabelMatrix;
use legnn::experiment::{
    inject_noise, metric_indices, run_experiment_config, test_accuracy, train_and_score,
    ExperimentConfig, NoiseSetting,
};
use legnn::gcn::GcnModel;
use legnn::metrics::{multilabel_prf, MetricSplit};
use legnn::noise::{LabelRole, LabelSet, NoiseKind};
use legnn::sbm::{gen_sbm, SbmParams};
use legnn::train::{Method, TrainConfig};
use legnn::Error;
use log::info;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "legnn",
    version,
    about = "Label-noise-robust node classification"
)]
struct Cli {
    /// Master seed (overrides any seed in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Nodes over which gathered-label quality is measured: all (every
    /// non-train node, the default), test or unlabeled.
    #[arg(long, global = true)]
    metric_split: Option<MetricSplit>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic block model dataset (config: SBM parameters).
    GenSbm {
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        nodes_per_class: Option<usize>,
        #[arg(long)]
        p_in: Option<f64>,
        #[arg(long)]
        p_out: Option<f64>,
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long)]
        feature_shift: Option<f64>,
    },
    /// Corrupt the train and validation labels of a dataset.
    InjectNoise {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "symmetric")]
        kind: NoiseKind,
        #[arg(long)]
        tau: f64,
    },
    /// Train one method once (config: training parameters).
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "legnn")]
        method: Method,
        /// Noisy labels written by inject-noise; otherwise noise is injected here.
        #[arg(long, conflicts_with_all = ["kind", "tau"])]
        labels: Option<PathBuf>,
        #[arg(long)]
        kind: Option<NoiseKind>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Score a saved model and, optionally, saved candidate labels.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Time ensemble training against the backbone (config: bench parameters).
    Bench {
        /// Dataset to time on; defaults to a 2,500-node, 5,000-edge SBM.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Skip the gathering-scaling measurements.
        #[arg(long)]
        no_scaling: bool,
    },
    /// Run a multi-method, multi-seed experiment with optional grid
    /// (config: experiment file, required).
    Sweep,
}

#[derive(Serialize, Deserialize)]
struct NoiseMeta {
    kind: NoiseKind,
    tau: f64,
    seed: u64,
}

/// Candidate labels per node, as written by `train`.
#[derive(Serialize, Deserialize)]
struct Candidates {
    num_classes: usize,
    candidates: Vec<Vec<usize>>,
}

impl Candidates {
    fn from_matrix(m: &MultiLabelMatrix) -> Self {
        Self {
            num_classes: m.cols(),
            candidates: (0..m.rows()).map(|i| m.candidates(i).collect()).collect(),
        }
    }

    fn to_matrix(&self) -> legnn::Result<MultiLabelMatrix> {
        let mut m = MultiLabelMatrix::new(self.candidates.len(), self.num_classes);
        for (i, row) in self.candidates.iter().enumerate() {
            for &j in row {
                if j >= self.num_classes {
                    return Err(Error::InvalidConfig(format!(
                        "node {i} has candidate {j} outside {} classes",
                        self.num_classes
                    )));
                }
                m.set(i, j, true);
            }
        }
        Ok(m)
    }
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path> {
    let dir = out
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--out is required for this command".into()))?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn config_or_default<T: Default + serde::de::DeserializeOwned>(
    path: &Option<PathBuf>,
) -> Result<T> {
    Ok(match path {
        Some(p) => read_json(p)?,
        None => T::default(),
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let metric_split = cli.metric_split.unwrap_or_default();
    match cli.command {
        Command::GenSbm {
            classes,
            nodes_per_class,
            p_in,
            p_out,
            feature_dim,
            feature_shift,
        } => {
            let mut p: SbmParams = config_or_default(&cli.config)?;
            p.classes = classes.unwrap_or(p.classes);
            p.nodes_per_class = nodes_per_class.unwrap_or(p.nodes_per_class);
            p.p_in = p_in.unwrap_or(p.p_in);
            p.p_out = p_out.unwrap_or(p.p_out);
            p.feature_dim = feature_dim.unwrap_or(p.feature_dim);
            p.feature_shift = feature_shift.unwrap_or(p.feature_shift);
            p.seed = cli.seed.unwrap_or(p.seed);
            let out = require_out(&cli.out)?;
            let bundle = gen_sbm(&p)?;
            write_dataset(&bundle, out)?;
            info!(
                "wrote {} ({} nodes, {} edges) to {}",
                bundle.meta.name,
                bundle.meta.num_nodes,
                bundle.graph.num_edges(),
                out.display()
            );
        }
        Command::InjectNoise { data, kind, tau } => {
            let out = require_out(&cli.out)?;
            let bundle = load_dataset(&data)?;
            let seed = cli.seed.unwrap_or(0);
            let noisy = inject_noise(&bundle, NoiseSetting { kind, tau }, seed)?;
            write_label_column(&out.join("noisy_labels.csv"), &noisy.labels)?;
            write_json(&out.join("noise_meta.json"), &NoiseMeta { kind, tau, seed })?;
            let labeled = bundle.splits.labeled();
            let flipped = labeled
                .iter()
                .filter(|&&i| noisy.get(i) != bundle.clean_labels.get(i))
                .count();
            info!("flipped {flipped} of {} labels", labeled.len());
        }
        Command::Train {
            data,
            method,
            labels,
            kind,
            tau,
        } => {
            let bundle = load_dataset(&data)?;
            let mut cfg: TrainConfig = config_or_default(&cli.config)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let noisy = match labels {
                Some(path) => LabelSet {
                    labels: read_label_column(&path, Some(bundle.meta.num_classes))?,
                    role: LabelRole::Noisy,
                },
                None => {
                    let noise = NoiseSetting {
                        kind: kind.unwrap_or(NoiseKind::Symmetric),
                        tau: tau.unwrap_or(0.0),
                    };
                    inject_noise(&bundle, noise, cfg.seed)?
                }
            };
            if noisy.len() != bundle.meta.num_nodes {
                return Err(Error::InvalidDataset(vec![format!(
                    "label file has {} rows for {} nodes",
                    noisy.len(),
                    bundle.meta.num_nodes
                )])
                .into());
            }
            let (run, model, trace) = train_and_score(&bundle, method, &noisy, &cfg, metric_split)?;
            let metrics = serde_json::json!({
                "method": method,
                "metric_split": metric_split,
                "config": cfg,
                "run": run,
            });
            if let Some(out) = cli
                .out
                .as_ref()
                .map(|_| require_out(&cli.out))
                .transpose()?
            {
                trace.write_csv(&out.join("trace.csv"))?;
                write_json(&out.join("metrics.json"), &metrics)?;
                write_json(&out.join("model.json"), &model)?;
                if let Some(labels) = &trace.best_labels {
                    write_json(
                        &out.join("candidates.json"),
                        &Candidates::from_matrix(labels),
                    )?;
                }
                if !trace.ensembles.is_empty() {
                    write_json(&out.join("ensembles.json"), &trace.ensembles)?;
                }
            }
            print_json(&metrics)?;
        }
        Command::Evaluate {
            data,
            model,
            candidates,
        } => {
            let bundle = load_dataset(&data)?;
            let model: GcnModel = read_json(&model)?;
            let accuracy = test_accuracy(&bundle, &model)?;
            let quality = match candidates {
                Some(path) => {
                    let m = read_json::<Candidates>(&path)?.to_matrix()?;
                    let idx = metric_indices(&bundle, metric_split);
                    Some(multilabel_prf(&m, &bundle.clean_labels, &idx)?)
                }
                None => None,
            };
            let report = serde_json::json!({
                "test_accuracy": accuracy,
                "metric_split": metric_split,
                "label_quality": quality,
            });
            if let Some(out) = cli
                .out
                .as_ref()
                .map(|_| require_out(&cli.out))
                .transpose()?
            {
                write_json(&out.join("metrics.json"), &report)?;
            }
            print_json(&report)?;
        }
        Command::Bench { data, no_scaling } => {
            let mut cfg: BenchConfig = config_or_default(&cli.config)?;
            cfg.train.seed = cli.seed.unwrap_or(cfg.train.seed);
            let bundle = match data {
                Some(dir) => load_dataset(&dir)?,
                None => scaling_graph(5_000, 4.0, cfg.train.seed)?,
            };
            let overhead = bench_overhead(&bundle, &cfg)?;
            let scaling = if no_scaling {
                None
            } else {
                Some(bench_gather_scaling(&cfg)?)
            };
            let report = serde_json::json!({
                "config": cfg,
                "overhead": overhead,
                "scaling": scaling,
            });
            if let Some(out) = cli
                .out
                .as_ref()
                .map(|_| require_out(&cli.out))
                .transpose()?
            {
                write_json(&out.join("bench.json"), &report)?;
            }
            print_json(&report)?;
        }
        Command::Sweep => {
            let path = cli.config.as_ref().ok_or_else(|| {
                Error::InvalidConfig("sweep needs --config <experiment.json>".into())
            })?;
            let mut config = ExperimentConfig::read(path)?;
            if let Some(seed) = cli.seed {
                config.seeds = vec![seed];
            }
            config.metric_split = cli.metric_split.unwrap_or(config.metric_split);
            let out = cli
                .out
                .as_ref()
                .map(|_| require_out(&cli.out))
                .transpose()?;
            let results = run_experiment_config(&config, out)?;
            for r in &results {
                match r.test_accuracy {
                    Some(acc) => println!(
                        "{:<20} test {:.2} ± {:.2} over {} seeds",
                        r.method.name(),
                        100.0 * acc.mean,
                        100.0 * acc.std,
                        r.runs.len()
                    ),
                    None => println!("{:<20} every seed failed: {:?}", r.method.name(), r.errors),
                }
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
