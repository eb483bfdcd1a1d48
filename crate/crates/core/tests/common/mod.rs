//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use legnn::dense::DenseMatrix;
use legnn::ensemble::{EnsembleSnapshot, MultiLabelMatrix, WeightRule};
use legnn::gcn::{cross_entropy, gcn_backward, gcn_forward, GcnHyper, GcnModel, Mode};
use legnn::graph::{build_graph, normalize, MaskedGraph, SparseGraph};
use legnn::loss::{bidirectional_loss, negative_loss, positive_loss};
use legnn::rng;
use rand::Rng;

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_MAX_REL: f64 = 1e-4;

pub struct Instance {
    pub graph: SparseGraph,
    pub x: DenseMatrix,
    pub model: GcnModel,
    pub labels: Vec<Option<usize>>,
    pub snapshot: EnsembleSnapshot,
}

/// A random connected graph with random features, labels and candidate sets.
pub fn instance(seed: u64, n: usize, classes: usize) -> Instance {
    let mut r = rng::stream(seed);
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((r.random_range(0..i), i));
    }
    edges.push((0, n - 1));
    let graph = normalize(&build_graph(&edges, n).unwrap());
    let x = DenseMatrix::from_fn(n, 4, |_, _| r.random_range(-1.0..1.0));
    let hyper = GcnHyper {
        hidden: 5,
        dropout: 0.0,
        ..GcnHyper::default()
    };
    let model = GcnModel::new(4, classes, hyper, &mut r).unwrap();
    let labels = (0..n).map(|i| Some(i % classes)).collect();
    let mut yp = MultiLabelMatrix::new(n, classes);
    let mut yn = MultiLabelMatrix::new(n, classes);
    for i in 0..n {
        yp.set(i, i % classes, true);
        yp.set(i, r.random_range(0..classes), true);
        yn.set(i, (i + 1) % classes, true);
        if r.random_bool(0.5) {
            yn.set(i, r.random_range(0..classes), true);
        }
    }
    // Weights are frozen: computed once from a fixed probability matrix.
    let probs = DenseMatrix::from_fn(n, classes, |i, j| ((i + 2 * j) % 5 + 1) as f64 / 15.0);
    let snapshot = EnsembleSnapshot::new(yp, yn, &probs, WeightRule::Candidate, 0).unwrap();
    Instance {
        graph,
        x,
        model,
        labels,
        snapshot,
    }
}

fn weight(model: &GcnModel, layer: usize) -> &[f64] {
    if layer == 0 {
        model.w1.data()
    } else {
        model.w2.data()
    }
}

fn weight_mut(model: &mut GcnModel, layer: usize) -> &mut [f64] {
    if layer == 0 {
        model.w1.data_mut()
    } else {
        model.w2.data_mut()
    }
}

pub type LossFn = dyn Fn(&Instance, &DenseMatrix) -> (f64, DenseMatrix);

/// Worst relative error between the analytic gradient of `loss` through the
/// GCN and central differences, over every weight.
pub fn max_rel_error(inst: &mut Instance, loss: &LossFn) -> f64 {
    let mut dummy = rng::stream(0);
    let (probs, cache) =
        gcn_forward(&inst.model, &inst.graph, &inst.x, Mode::Infer, &mut dummy).unwrap();
    let (_, d_probs) = loss(inst, &probs);
    let grads = gcn_backward(&cache, &d_probs).unwrap();
    drop(cache);

    let eval = |inst: &Instance| {
        let mut dummy = rng::stream(0);
        let (probs, _) =
            gcn_forward(&inst.model, &inst.graph, &inst.x, Mode::Infer, &mut dummy).unwrap();
        loss(inst, &probs).0
    };
    let mut worst: f64 = 0.0;
    for layer in 0..2 {
        let analytic = if layer == 0 { &grads.w1 } else { &grads.w2 };
        for k in 0..analytic.data().len() {
            let original = weight(&inst.model, layer)[k];
            weight_mut(&mut inst.model, layer)[k] = original + GRAD_EPS;
            let plus = eval(inst);
            weight_mut(&mut inst.model, layer)[k] = original - GRAD_EPS;
            let minus = eval(inst);
            weight_mut(&mut inst.model, layer)[k] = original;
            let numeric = (plus - minus) / (2.0 * GRAD_EPS);
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

pub const GRAD_INSTANCES: [(u64, usize, usize); 4] = [(1, 5, 3), (2, 7, 3), (3, 10, 4), (4, 8, 2)];

pub fn ce_loss(inst: &Instance, probs: &DenseMatrix) -> (f64, DenseMatrix) {
    let idx: Vec<usize> = (0..probs.rows()).step_by(2).collect();
    cross_entropy(probs, &inst.labels, &idx).unwrap()
}

pub fn positive(inst: &Instance, probs: &DenseMatrix) -> (f64, DenseMatrix) {
    positive_loss(probs, &inst.snapshot).unwrap()
}

pub fn negative(inst: &Instance, probs: &DenseMatrix) -> (f64, DenseMatrix) {
    negative_loss(probs, &inst.snapshot).unwrap()
}

pub fn bidirectional(inst: &Instance, probs: &DenseMatrix) -> (f64, DenseMatrix) {
    let r = bidirectional_loss(probs, &inst.snapshot).unwrap();
    (r.total, r.d_probs)
}

/// Worst relative error of each loss over every gradient-check instance.
pub fn gradient_report() -> Vec<(&'static str, f64)> {
    let losses: [(&str, &LossFn); 4] = [
        ("CE", &ce_loss),
        ("L^p", &positive),
        ("L^n", &negative),
        ("L", &bidirectional),
    ];
    losses
        .iter()
        .map(|(name, loss)| {
            let worst = GRAD_INSTANCES
                .iter()
                .map(|&(seed, n, c)| max_rel_error(&mut instance(seed, n, c), *loss))
                .fold(0.0, f64::max);
            (*name, worst)
        })
        .collect()
}

fn first_extreme(row: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if better(row[j], row[best]) {
            best = j;
        }
    }
    best
}

/// Per-node, per-view reimplementation of label gathering using only entry
/// lookups on each view.
pub fn brute_force_gather(
    model: &GcnModel,
    views: &[MaskedGraph<'_>],
    x: &DenseMatrix,
) -> (MultiLabelMatrix, MultiLabelMatrix) {
    let n = x.rows();
    let c = model.num_classes();
    let h = model.hyper.hidden;
    let mut yp = MultiLabelMatrix::new(n, c);
    let mut yn = MultiLabelMatrix::new(n, c);
    let xw: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..h)
                .map(|k| {
                    (0..x.cols())
                        .map(|f| x.get(i, f) * model.w1.get(f, k))
                        .sum()
                })
                .collect()
        })
        .collect();
    for view in views {
        let neighbors = |i: usize| {
            view.base()
                .neighbors(i)
                .iter()
                .filter_map(move |&j| view.value(i, j).map(|v| (j, v)))
        };
        let hidden: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..h)
                    .map(|k| {
                        neighbors(i)
                            .map(|(j, v)| v * xw[j][k])
                            .sum::<f64>()
                            .max(0.0)
                    })
                    .collect()
            })
            .collect();
        let hw: Vec<Vec<f64>> = hidden
            .iter()
            .map(|row| {
                (0..c)
                    .map(|m| (0..h).map(|k| row[k] * model.w2.get(k, m)).sum())
                    .collect()
            })
            .collect();
        for i in 0..n {
            let logits: Vec<f64> = (0..c)
                .map(|m| neighbors(i).map(|(j, v)| v * hw[j][m]).sum())
                .collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = exp.iter().sum();
            let probs: Vec<f64> = exp.iter().map(|e| e / total).collect();
            yp.set(i, first_extreme(&probs, |a, b| a > b), true);
            yn.set(i, first_extreme(&probs, |a, b| a < b), true);
        }
    }
    (yp, yn)
}

/// Majority-vote error probability by enumerating all `2^p` outcomes.
pub fn enumerate_voting_error(p: usize, alpha: f64) -> f64 {
    (0u32..(1 << p))
        .filter(|mask| 2 * mask.count_ones() as usize >= p)
        .map(|mask| {
            let wrong = mask.count_ones() as i32;
            alpha.powi(wrong) * (1.0 - alpha).powi(p as i32 - wrong)
        })
        .sum()
}
