use std::time::Instant;

use log::warn;

use super::{finish, run_phase, warmup, Context, Objective, PhaseTimes, TrainConfig, TrainTrace};
use crate::dataset::Splits;
use crate::dense::{argmax, DenseMatrix};
use crate::ensemble::{EnsembleSnapshot, MultiLabelMatrix};
use crate::error::Result;
use crate::gcn::{cross_entropy, GcnModel};
use crate::graph::SparseGraph;
use crate::loss::bidirectional_loss_with;
use crate::noise::LabelSet;

/// Neighbor-label propagation: each node's candidate set is the union of its
/// labeled neighbors' current labels.
struct Propagation {
    /// Current label per node; only training nodes start labeled.
    current: Vec<Option<usize>>,
    snapshot: EnsembleSnapshot,
    include_negative: bool,
    gather_seconds: f64,
}

impl Propagation {
    fn build(
        ctx: &Context<'_>,
        model: &GcnModel,
        current: &[Option<usize>],
        epoch: usize,
    ) -> Result<EnsembleSnapshot> {
        let probs = ctx.infer(model)?;
        let graph = &ctx.graph;
        let (n, c) = (graph.num_nodes(), ctx.num_classes);
        let mut yp = MultiLabelMatrix::new(n, c);
        let mut yn = MultiLabelMatrix::new(n, c);
        for i in 0..n {
            let mut any = false;
            for &j in graph.neighbors(i) {
                if j == i {
                    continue;
                }
                if let Some(y) = current[j] {
                    yp.set(i, y, true);
                    any = true;
                }
            }
            if !any {
                // No labeled neighbor: fall back to the node's own label, or
                // the model's prediction if it has none yet.
                let own = current[i].unwrap_or_else(|| argmax(probs.row(i)));
                yp.set(i, own, true);
            }
            yn.set(i, probs.row_argmin(i), true);
        }
        EnsembleSnapshot::new(yp, yn, &probs, ctx.cfg.weight_rule, epoch)
    }
}

impl Objective for Propagation {
    fn loss(&mut self, probs: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        let report = bidirectional_loss_with(probs, &self.snapshot, self.include_negative)?;
        Ok((report.total, report.d_probs))
    }

    fn refresh(&mut self, ctx: &Context<'_>, model: &GcnModel, epoch: usize) -> Result<bool> {
        let start = Instant::now();
        let probs = ctx.infer(model)?;
        self.current = probs.argmax_rows().into_iter().map(Some).collect();
        self.snapshot = Self::build(ctx, model, &self.current, epoch)?;
        self.gather_seconds += start.elapsed().as_secs_f64();
        Ok(true)
    }

    fn labels(&self) -> Option<MultiLabelMatrix> {
        Some(self.snapshot.yp.clone())
    }
}

/// Neighbor-label propagation baseline: after a cross-entropy warmup, train
/// on the union of neighbors' labels with the bidirectional loss, and on
/// each validation decline relabel every node with the model's argmax.
pub fn train_propagation(
    graph: &SparseGraph,
    x: &DenseMatrix,
    noisy_labels: &LabelSet,
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<(GcnModel, TrainTrace)> {
    train_propagation_with_classes(graph, x, noisy_labels, splits, cfg, None)
}

pub(crate) fn train_propagation_with_classes(
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
    let (model, warmup_records) = warmup(&ctx)?;
    let warmup_seconds = start.elapsed().as_secs_f64();

    let build_start = Instant::now();
    let current = noisy_labels.restrict(&splits.train).labels;
    let snapshot = Propagation::build(&ctx, &model, &current, 0)?;
    let mut objective = Propagation {
        current,
        snapshot,
        include_negative: cfg.include_negative,
        gather_seconds: build_start.elapsed().as_secs_f64(),
    };
    let outcome = run_phase(&ctx, model, cfg.epochs, &mut objective, cfg.regather, 1)?;
    let times = PhaseTimes {
        warmup: warmup_seconds,
        gather: objective.gather_seconds,
        total: start.elapsed().as_secs_f64(),
    };
    Ok(finish(
        outcome,
        warmup_records,
        Vec::new(),
        Vec::new(),
        times,
    ))
}

/// Confident-prediction selection: cross-entropy on the nodes whose top
/// probability exceeds the threshold, labeled with their argmax.
struct Confidence {
    labels: Vec<Option<usize>>,
    selected: Vec<usize>,
    num_classes: usize,
    warnings: Vec<String>,
    gather_seconds: f64,
}

impl Confidence {
    fn select(&mut self, ctx: &Context<'_>, model: &GcnModel, epoch: usize) -> Result<()> {
        let start = Instant::now();
        let probs = ctx.infer(model)?;
        let threshold = ctx.cfg.confidence_threshold;
        let mut labels = vec![None; probs.rows()];
        let mut selected = Vec::new();
        for (i, row) in probs.row_iter().enumerate() {
            let top = argmax(row);
            if row[top] > threshold {
                labels[i] = Some(top);
                selected.push(i);
            }
        }
        if selected.is_empty() {
            let msg = format!(
                "epoch {epoch}: no node exceeds confidence {threshold}; training on the noisy training labels this round"
            );
            warn!("{msg}");
            self.warnings.push(msg);
            labels = ctx.noisy.restrict(&ctx.splits.train).labels;
            selected = ctx.splits.train.clone();
        }
        self.labels = labels;
        self.selected = selected;
        self.gather_seconds += start.elapsed().as_secs_f64();
        Ok(())
    }
}

impl Objective for Confidence {
    fn loss(&mut self, probs: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        cross_entropy(probs, &self.labels, &self.selected)
    }

    fn refresh(&mut self, ctx: &Context<'_>, model: &GcnModel, epoch: usize) -> Result<bool> {
        self.select(ctx, model, epoch)?;
        Ok(true)
    }

    fn labels(&self) -> Option<MultiLabelMatrix> {
        let mut m = MultiLabelMatrix::new(self.labels.len(), self.num_classes);
        for &i in &self.selected {
            if let Some(y) = self.labels[i] {
                m.set(i, y, true);
            }
        }
        Some(m)
    }
}

/// Confidence-selection baseline: after a cross-entropy warmup, retrain on
/// the confidently predicted nodes only, reselecting on validation declines.
/// When no node clears the threshold the round falls back to the noisy
/// training labels and a warning is recorded in the trace.
pub fn train_confidence(
    graph: &SparseGraph,
    x: &DenseMatrix,
    noisy_labels: &LabelSet,
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<(GcnModel, TrainTrace)> {
    train_confidence_with_classes(graph, x, noisy_labels, splits, cfg, None)
}

pub(crate) fn train_confidence_with_classes(
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
    let (model, warmup_records) = warmup(&ctx)?;
    let warmup_seconds = start.elapsed().as_secs_f64();

    let mut objective = Confidence {
        labels: Vec::new(),
        selected: Vec::new(),
        num_classes: ctx.num_classes,
        warnings: Vec::new(),
        gather_seconds: 0.0,
    };
    objective.select(&ctx, &model, 0)?;
    let outcome = run_phase(&ctx, model, cfg.epochs, &mut objective, cfg.regather, 1)?;
    let times = PhaseTimes {
        warmup: warmup_seconds,
        gather: objective.gather_seconds,
        total: start.elapsed().as_secs_f64(),
    };
    let warnings = std::mem::take(&mut objective.warnings);
    Ok(finish(outcome, warmup_records, Vec::new(), warnings, times))
}
