//! Training procedures: the cross-entropy backbone, label ensembling, and
//! the two reliable-labeling baselines (neighbor propagation and confidence
//! selection).
//!
//! Every trainer runs a fixed epoch budget, snapshots the model with the best
//! validation accuracy (measured against the noisy validation labels) and
//! records one [`EpochRecord`] per epoch. Clean labels are never read here.

mod baselines;
mod legnn;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Splits;
use crate::dense::DenseMatrix;
use crate::ensemble::{EnsembleDump, MaskConfig, MultiLabelMatrix, WeightRule};
use crate::error::{Error, Result};
use crate::gcn::{
    cross_entropy, gcn_backward, gcn_forward, gcn_infer, sgd_step, GcnHyper, GcnModel, Mode,
};
use crate::graph::{normalize, MaskScope, MaskStrategy, SparseGraph};
use crate::metrics::accuracy;
use crate::noise::LabelSet;
use crate::rng::{self, tags};

pub use baselines::{train_confidence, train_propagation};
pub use legnn::train_legnn;

/// When a validation decline counts toward refreshing the training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegatherRule {
    /// Validation accuracy fell below the best seen so far.
    #[default]
    BelowBest,
    /// Validation accuracy fell below the previous epoch's.
    BelowPrevious,
    /// Targets are built once and never refreshed.
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Cross-entropy epochs used to initialize the non-backbone trainers.
    pub warmup_epochs: usize,
    pub hidden: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub mask_rate: f64,
    pub mask_strategy: MaskStrategy,
    pub mask_scope: MaskScope,
    pub mask_iterations: usize,
    pub seed: u64,
    pub regather: RegatherRule,
    /// Consecutive declining epochs needed before a refresh. With a small
    /// validation split, 1 refreshes almost every epoch; about 10 is steadier.
    pub patience: usize,
    pub weight_rule: WeightRule,
    pub include_negative: bool,
    /// Remove high-probability classes from the low-probability set. Off by
    /// default, so a class can sit in both sets and receive both loss terms.
    pub disjoint_negative: bool,
    pub confidence_threshold: f64,
    /// Keep every gathered ensemble in the trace.
    pub record_ensembles: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let hyper = GcnHyper::default();
        Self {
            epochs: 200,
            warmup_epochs: 50,
            hidden: hyper.hidden,
            lr: hyper.lr,
            momentum: hyper.momentum,
            weight_decay: hyper.weight_decay,
            dropout: hyper.dropout,
            mask_rate: 0.5,
            mask_strategy: MaskStrategy::Random,
            mask_scope: MaskScope::Directed,
            mask_iterations: 15,
            seed: 0,
            regather: RegatherRule::BelowBest,
            patience: 1,
            weight_rule: WeightRule::Candidate,
            include_negative: true,
            disjoint_negative: false,
            confidence_threshold: 0.99,
            record_ensembles: false,
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> GcnHyper {
        GcnHyper {
            hidden: self.hidden,
            dropout: self.dropout,
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    pub fn mask(&self) -> MaskConfig {
        MaskConfig {
            rate: self.mask_rate,
            strategy: self.mask_strategy,
            scope: self.mask_scope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(0.0..1.0).contains(&self.mask_rate) {
            problems.push(format!(
                "mask_rate must lie in [0, 1), got {}",
                self.mask_rate
            ));
        }
        if self.mask_iterations == 0 {
            problems.push("mask_iterations must be at least 1".to_string());
        }
        if self.hidden == 0 {
            problems.push("hidden must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                problems.push(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            problems.push(format!(
                "confidence_threshold must lie in [0, 1], got {}",
                self.confidence_threshold
            ));
        }
        if self.patience == 0 {
            problems.push("patience must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub regathered: bool,
}

/// Wall-clock seconds spent in each phase of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub warmup: f64,
    /// Building training targets (view masking plus multi-view inference
    /// for the ensemble trainer).
    pub gather: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Main-phase epochs, numbered from 1.
    pub records: Vec<EpochRecord>,
    /// Cross-entropy initialization epochs (empty for the backbone itself).
    pub warmup_records: Vec<EpochRecord>,
    /// `0` when no epoch beat the starting model.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub best_model: GcnModel,
    pub final_model: GcnModel,
    /// Training targets in effect at the best epoch, when the trainer builds
    /// any (candidate sets for the ensemble and propagation trainers, the
    /// selected pseudo-labels for the confidence trainer).
    pub best_labels: Option<MultiLabelMatrix>,
    pub refresh_count: usize,
    pub ensembles: Vec<EnsembleDump>,
    pub warnings: Vec<String>,
    pub times: PhaseTimes,
}

impl TrainTrace {
    /// CSV with columns `epoch,train_loss,val_acc,regathered`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_acc,regathered\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.epoch, r.train_loss, r.val_accuracy, r.regathered
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Inputs shared by every epoch of a run.
pub(crate) struct Context<'a> {
    pub graph: SparseGraph,
    pub x: &'a DenseMatrix,
    pub noisy: &'a LabelSet,
    pub splits: &'a Splits,
    pub num_classes: usize,
    pub cfg: &'a TrainConfig,
}

impl<'a> Context<'a> {
    fn new(
        graph: &SparseGraph,
        x: &'a DenseMatrix,
        noisy: &'a LabelSet,
        splits: &'a Splits,
        cfg: &'a TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = graph.num_nodes();
        if x.rows() != n {
            return Err(Error::shape("train", format!("{n} feature rows"), x.rows()));
        }
        if noisy.len() != n {
            return Err(Error::shape("train", format!("{n} labels"), noisy.len()));
        }
        splits.validate(n)?;
        if splits.train.is_empty() {
            return Err(Error::EmptySet("training split"));
        }
        if splits.val.is_empty() {
            return Err(Error::EmptySet("validation split"));
        }
        if let Some(&i) = splits
            .train
            .iter()
            .chain(&splits.val)
            .find(|&&i| noisy.get(i).is_none())
        {
            return Err(Error::InvalidConfig(format!(
                "labeled node {i} has no noisy label"
            )));
        }
        let num_classes = noisy
            .labels
            .iter()
            .flatten()
            .map(|&y| y + 1)
            .max()
            .unwrap_or(0);
        Ok(Self {
            graph: normalize(graph),
            x,
            noisy,
            splits,
            num_classes: num_classes.max(2),
            cfg,
        })
    }

    fn with_classes(mut self, num_classes: usize) -> Result<Self> {
        if num_classes < self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "labels use {} classes but {num_classes} were requested",
                self.num_classes
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    fn init_model(&self) -> Result<GcnModel> {
        let mut stream = rng::stream(rng::derive_seed(self.cfg.seed, tags::INIT));
        GcnModel::new(
            self.x.cols(),
            self.num_classes,
            self.cfg.hyper(),
            &mut stream,
        )
    }

    pub fn infer(&self, model: &GcnModel) -> Result<DenseMatrix> {
        gcn_infer(model, &self.graph, self.x)
    }

    fn val_accuracy(&self, model: &GcnModel) -> Result<f64> {
        let preds = self.infer(model)?.argmax_rows();
        accuracy(&preds, self.noisy, &self.splits.val)
    }
}

/// A per-epoch training target that may be rebuilt after validation declines.
pub(crate) trait Objective {
    fn loss(&mut self, probs: &DenseMatrix) -> Result<(f64, DenseMatrix)>;

    /// Rebuilds the targets from `model`; returns whether anything changed.
    fn refresh(&mut self, _ctx: &Context<'_>, _model: &GcnModel, _epoch: usize) -> Result<bool> {
        Ok(false)
    }

    fn labels(&self) -> Option<MultiLabelMatrix> {
        None
    }
}

/// Cross-entropy on a fixed labeled subset.
pub(crate) struct CrossEntropy {
    pub labels: Vec<Option<usize>>,
    pub index_set: Vec<usize>,
}

impl Objective for CrossEntropy {
    fn loss(&mut self, probs: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        cross_entropy(probs, &self.labels, &self.index_set)
    }
}

pub(crate) struct PhaseOutcome {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub best_model: GcnModel,
    pub final_model: GcnModel,
    pub best_labels: Option<MultiLabelMatrix>,
    pub refresh_count: usize,
}

/// The shared epoch loop. `stream_tag` separates the dropout streams of
/// successive phases of one run.
pub(crate) fn run_phase(
    ctx: &Context<'_>,
    mut model: GcnModel,
    epochs: usize,
    objective: &mut dyn Objective,
    rule: RegatherRule,
    stream_tag: u64,
) -> Result<PhaseOutcome> {
    let mut dropout = rng::stream(rng::derive_seed(
        rng::derive_seed(ctx.cfg.seed, tags::DROPOUT),
        stream_tag,
    ));
    let mut records = Vec::with_capacity(epochs);
    let mut best_val = ctx.val_accuracy(&model)?;
    let mut best_epoch = 0;
    let mut best_model = model.clone();
    let mut best_labels = objective.labels();
    let mut started = false;
    let mut previous = best_val;
    let mut declines = 0usize;
    let mut refresh_count = 0;

    for epoch in 1..=epochs {
        let (probs, cache) = gcn_forward(&model, &ctx.graph, ctx.x, Mode::Train, &mut dropout)?;
        let (train_loss, d_probs) = objective.loss(&probs)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let grads = gcn_backward(&cache, &d_probs)?;
        drop(cache);
        sgd_step(&mut model, &grads)?;
        let val_accuracy = ctx.val_accuracy(&model)?;

        // The starting model only seeds the snapshot; the running best that
        // triggers refreshes is taken over trained epochs.
        let declined = started
            && match rule {
                RegatherRule::BelowBest => val_accuracy < best_val,
                RegatherRule::BelowPrevious => val_accuracy < previous,
                RegatherRule::Never => false,
            };
        declines = if declined { declines + 1 } else { 0 };
        let mut regathered = false;
        let labels_used = objective.labels();
        if declined && declines >= ctx.cfg.patience {
            regathered = objective.refresh(ctx, &model, epoch)?;
            declines = 0;
            if regathered {
                refresh_count += 1;
            }
        }
        if !started || val_accuracy > best_val {
            best_val = val_accuracy;
            best_epoch = epoch;
            best_model = model.clone();
            best_labels = labels_used;
        }
        started = true;
        previous = val_accuracy;
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
            regathered,
        });
    }
    Ok(PhaseOutcome {
        records,
        best_epoch,
        best_val_accuracy: best_val,
        best_model,
        final_model: model,
        best_labels,
        refresh_count,
    })
}

fn ce_objective(ctx: &Context<'_>) -> CrossEntropy {
    CrossEntropy {
        labels: ctx.noisy.restrict(&ctx.splits.train).labels,
        index_set: ctx.splits.train.clone(),
    }
}

/// Cross-entropy warmup for the label-refining trainers. Returns the
/// best-validation model and the warmup records.
pub(crate) fn warmup(ctx: &Context<'_>) -> Result<(GcnModel, Vec<EpochRecord>)> {
    let model = ctx.init_model()?;
    let mut objective = ce_objective(ctx);
    let outcome = run_phase(
        ctx,
        model,
        ctx.cfg.warmup_epochs,
        &mut objective,
        RegatherRule::Never,
        0,
    )?;
    Ok((outcome.best_model, outcome.records))
}

pub(crate) fn finish(
    outcome: PhaseOutcome,
    warmup_records: Vec<EpochRecord>,
    ensembles: Vec<EnsembleDump>,
    warnings: Vec<String>,
    times: PhaseTimes,
) -> (GcnModel, TrainTrace) {
    let model = outcome.best_model.clone();
    (
        model,
        TrainTrace {
            records: outcome.records,
            warmup_records,
            best_epoch: outcome.best_epoch,
            best_val_accuracy: outcome.best_val_accuracy,
            best_model: outcome.best_model,
            final_model: outcome.final_model,
            best_labels: outcome.best_labels,
            refresh_count: outcome.refresh_count,
            ensembles,
            warnings,
            times,
        },
    )
}

/// Plain GCN trained with cross-entropy on the (noisy) training labels.
///
/// `graph` may be raw `A + I` or already normalized. With `epochs = 0` the
/// returned model is the initialization.
pub fn train_gcn_ce(
    graph: &SparseGraph,
    x: &DenseMatrix,
    noisy_labels: &LabelSet,
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<(GcnModel, TrainTrace)> {
    train_gcn_ce_with_classes(graph, x, noisy_labels, splits, cfg, None)
}

/// [`train_gcn_ce`] with an explicit class count, for label sets in which
/// the highest classes never occur.
pub fn train_gcn_ce_with_classes(
    graph: &SparseGraph,
    x: &DenseMatrix,
    noisy_labels: &LabelSet,
    splits: &Splits,
    cfg: &TrainConfig,
    num_classes: Option<usize>,
) -> Result<(GcnModel, TrainTrace)> {
    let start = Instant::now();
    let mut ctx = Context::new(graph, x, noisy_labels, splits, cfg)?;
    if let Some(c) = num_classes {
        ctx = ctx.with_classes(c)?;
    }
    let model = ctx.init_model()?;
    let mut objective = ce_objective(&ctx);
    let outcome = run_phase(
        &ctx,
        model,
        cfg.epochs,
        &mut objective,
        RegatherRule::Never,
        1,
    )?;
    let times = PhaseTimes {
        total: start.elapsed().as_secs_f64(),
        ..PhaseTimes::default()
    };
    Ok(finish(outcome, Vec::new(), Vec::new(), Vec::new(), times))
}

/// Training procedures selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Cross-entropy backbone.
    Gcn,
    Legnn,
    /// Label ensembling with nearest-neighbor instead of random masking.
    LegnnNearest,
    /// Label ensembling without the low-probability term.
    LegnnNoNegative,
    /// Self-training on the model's own argmax: one unmasked view, no
    /// low-probability term.
    NoGathering,
    Propagation,
    Confidence,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Gcn,
        Method::Legnn,
        Method::LegnnNearest,
        Method::LegnnNoNegative,
        Method::NoGathering,
        Method::Propagation,
        Method::Confidence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gcn => "gcn",
            Method::Legnn => "legnn",
            Method::LegnnNearest => "legnn-nearest",
            Method::LegnnNoNegative => "legnn-no-negative",
            Method::NoGathering => "no-gathering",
            Method::Propagation => "propagation",
            Method::Confidence => "confidence",
        }
    }

    /// The configuration this method actually trains with.
    pub fn resolve(self, cfg: &TrainConfig) -> TrainConfig {
        let mut cfg = cfg.clone();
        match self {
            Method::LegnnNearest => cfg.mask_strategy = MaskStrategy::Nearest,
            Method::LegnnNoNegative => cfg.include_negative = false,
            Method::NoGathering => {
                cfg.mask_rate = 0.0;
                cfg.mask_iterations = 1;
                cfg.include_negative = false;
            }
            _ => {}
        }
        cfg
    }

    pub fn train(
        self,
        graph: &SparseGraph,
        x: &DenseMatrix,
        noisy_labels: &LabelSet,
        splits: &Splits,
        cfg: &TrainConfig,
        num_classes: Option<usize>,
    ) -> Result<(GcnModel, TrainTrace)> {
        let cfg = self.resolve(cfg);
        match self {
            Method::Gcn => {
                train_gcn_ce_with_classes(graph, x, noisy_labels, splits, &cfg, num_classes)
            }
            Method::Legnn
            | Method::LegnnNearest
            | Method::LegnnNoNegative
            | Method::NoGathering => {
                legnn::train_legnn_with_classes(graph, x, noisy_labels, splits, &cfg, num_classes)
            }
            Method::Propagation => baselines::train_propagation_with_classes(
                graph,
                x,
                noisy_labels,
                splits,
                &cfg,
                num_classes,
            ),
            Method::Confidence => baselines::train_confidence_with_classes(
                graph,
                x,
                noisy_labels,
                splits,
                &cfg,
                num_classes,
            ),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown method {s:?} (expected one of {})",
                    known.join(", ")
                ))
            })
    }
}
