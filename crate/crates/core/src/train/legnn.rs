use std::time::Instant;

use super::{finish, run_phase, warmup, Context, Objective, PhaseTimes, TrainConfig, TrainTrace};
use crate::dataset::Splits;
use crate::dense::DenseMatrix;
use crate::ensemble::{
    bootstrap_views_with, gather_labels, EnsembleDump, EnsembleSnapshot, MultiLabelMatrix,
};
use crate::error::Result;
use crate::gcn::GcnModel;
use crate::graph::SparseGraph;
use crate::loss::bidirectional_loss_with;
use crate::noise::LabelSet;
use crate::rng::{self, tags};

/// The current gathered candidate sets and the bookkeeping around them.
struct Ensemble {
    snapshot: EnsembleSnapshot,
    include_negative: bool,
    events: u64,
    dumps: Vec<EnsembleDump>,
    gather_seconds: f64,
}

impl Ensemble {
    fn start(ctx: &Context<'_>, model: &GcnModel) -> Result<Self> {
        let mut this = Self {
            snapshot: gather(ctx, model, 0, 0)?,
            include_negative: ctx.cfg.include_negative,
            events: 1,
            dumps: Vec::new(),
            gather_seconds: 0.0,
        };
        this.record(ctx)?;
        Ok(this)
    }

    fn record(&mut self, ctx: &Context<'_>) -> Result<()> {
        if ctx.cfg.record_ensembles {
            self.dumps
                .push(EnsembleDump::from_snapshot(&self.snapshot)?);
        }
        Ok(())
    }
}

fn gather(
    ctx: &Context<'_>,
    model: &GcnModel,
    epoch: usize,
    event: u64,
) -> Result<EnsembleSnapshot> {
    let cfg = ctx.cfg;
    let seed = rng::derive_seed(rng::derive_seed(cfg.seed, tags::MASK), event);
    let views = bootstrap_views_with(
        &ctx.graph,
        Some(ctx.x),
        &cfg.mask(),
        cfg.mask_iterations,
        seed,
    )?;
    let snapshot = gather_labels(model, &views, ctx.x, cfg.weight_rule, epoch)?;
    if !cfg.disjoint_negative {
        return Ok(snapshot);
    }
    let EnsembleSnapshot { yp, mut yn, .. } = snapshot;
    for i in 0..yn.rows() {
        for j in 0..yn.cols() {
            if yp.get(i, j) {
                yn.set(i, j, false);
            }
        }
    }
    EnsembleSnapshot::new(yp, yn, &ctx.infer(model)?, cfg.weight_rule, epoch)
}

impl Objective for Ensemble {
    fn loss(&mut self, probs: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        let report = bidirectional_loss_with(probs, &self.snapshot, self.include_negative)?;
        Ok((report.total, report.d_probs))
    }

    fn refresh(&mut self, ctx: &Context<'_>, model: &GcnModel, epoch: usize) -> Result<bool> {
        let start = Instant::now();
        self.snapshot = gather(ctx, model, epoch, self.events)?;
        self.events += 1;
        self.gather_seconds += start.elapsed().as_secs_f64();
        self.record(ctx)?;
        Ok(true)
    }

    fn labels(&self) -> Option<MultiLabelMatrix> {
        Some(self.snapshot.yp.clone())
    }
}

/// Label ensembling: a cross-entropy warmup, then training on gathered
/// high/low-probability candidate sets over all nodes, re-gathering whenever
/// validation accuracy declines.
///
/// `graph` may be raw `A + I` or already normalized.
pub fn train_legnn(
    graph: &SparseGraph,
    x: &DenseMatrix,
    noisy_labels: &LabelSet,
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<(GcnModel, TrainTrace)> {
    train_legnn_with_classes(graph, x, noisy_labels, splits, cfg, None)
}

pub(crate) fn train_legnn_with_classes(
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

    let gather_start = Instant::now();
    let mut objective = Ensemble::start(&ctx, &model)?;
    objective.gather_seconds += gather_start.elapsed().as_secs_f64();
    let outcome = run_phase(&ctx, model, cfg.epochs, &mut objective, cfg.regather, 1)?;
    let times = PhaseTimes {
        warmup: warmup_seconds,
        gather: objective.gather_seconds,
        total: start.elapsed().as_secs_f64(),
    };
    Ok(finish(
        outcome,
        warmup_records,
        objective.dumps,
        Vec::new(),
        times,
    ))
}
