//! Wall-clock overhead of label ensembling relative to the backbone.
//!
//! Dataset loading is never timed; every figure is the median of
//! `repeats` runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetBundle;
use crate::ensemble::{bootstrap_views_with, gather_labels};
use crate::error::{Error, Result};
use crate::experiment::{inject_noise, NoiseSetting};
use crate::gcn::GcnModel;
use crate::graph::normalize;
use crate::noise::NoiseKind;
use crate::rng::{self, tags};
use crate::sbm::{gen_sbm, SbmParams};
use crate::train::{train_gcn_ce_with_classes, Method, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub train: TrainConfig,
    pub noise: NoiseSetting,
    pub repeats: usize,
    /// Target edge counts for the gathering-scaling graphs.
    pub scaling_edges: Vec<usize>,
    /// Average degree of the scaling graphs; node counts follow from it.
    pub scaling_degree: f64,
    /// Gathering passes per timed sample, to lift short timings above
    /// clock noise.
    pub gather_passes: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            noise: NoiseSetting {
                kind: NoiseKind::Symmetric,
                tau: 0.3,
            },
            repeats: 3,
            scaling_edges: vec![10_000, 20_000, 40_000],
            scaling_degree: 4.0,
            gather_passes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub mask_iterations: usize,
    /// Cross-entropy backbone training.
    pub backbone_seconds: f64,
    /// Full ensemble training including warmup and every re-gather.
    pub legnn_seconds: f64,
    /// Gathering time inside the ensemble run.
    pub legnn_gather_seconds: f64,
    pub gather_events: usize,
    /// One gathering pass (masking plus inference on every view).
    pub gather_seconds: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub mask_iterations: usize,
    pub gather_seconds: f64,
    pub seconds_per_edge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub edges: Vec<ScalingPoint>,
    /// `(t_{k+1}/t_k) / (E_{k+1}/E_k)` for consecutive sizes; 1 is linear.
    pub edge_ratio_of_ratios: Vec<f64>,
    /// Gathering at `M_e` and at `2·M_e` on the largest graph.
    pub mask_iterations: (ScalingPoint, ScalingPoint),
    pub mask_iterations_ratio: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn check(cfg: &BenchConfig) -> Result<()> {
    if cfg.repeats == 0 || cfg.gather_passes == 0 {
        return Err(Error::InvalidConfig(
            "repeats and gather_passes must be at least 1".into(),
        ));
    }
    cfg.train.validate()
}

/// Median seconds of one gathering pass with `mask_iterations` views.
pub fn time_gather(
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    mask_iterations: usize,
    repeats: usize,
    passes: usize,
) -> Result<f64> {
    let graph = normalize(&bundle.graph);
    let mut init = rng::stream(rng::derive_seed(cfg.seed, tags::INIT));
    let model = GcnModel::new(
        bundle.meta.num_features,
        bundle.meta.num_classes,
        cfg.hyper(),
        &mut init,
    )?;
    let mut samples = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let start = Instant::now();
        for p in 0..passes {
            let seed = rng::derive_seed(cfg.seed, (r * passes + p) as u64);
            let views = bootstrap_views_with(
                &graph,
                Some(&bundle.features),
                &cfg.mask(),
                mask_iterations,
                seed,
            )?;
            gather_labels(&model, &views, &bundle.features, cfg.weight_rule, 0)?;
        }
        samples.push(start.elapsed().as_secs_f64() / passes as f64);
    }
    Ok(median(samples))
}

/// Times backbone training, ensemble training and one gathering pass on
/// `bundle`.
pub fn bench_overhead(bundle: &DatasetBundle, cfg: &BenchConfig) -> Result<OverheadReport> {
    check(cfg)?;
    let noisy = inject_noise(bundle, cfg.noise, cfg.train.seed)?;
    let c = Some(bundle.meta.num_classes);
    let mut backbone = Vec::new();
    let mut legnn = Vec::new();
    let mut legnn_gather = Vec::new();
    let mut events = Vec::new();
    for _ in 0..cfg.repeats {
        let start = Instant::now();
        train_gcn_ce_with_classes(
            &bundle.graph,
            &bundle.features,
            &noisy,
            &bundle.splits,
            &cfg.train,
            c,
        )?;
        backbone.push(start.elapsed().as_secs_f64());

        let start = Instant::now();
        let (_, trace) = Method::Legnn.train(
            &bundle.graph,
            &bundle.features,
            &noisy,
            &bundle.splits,
            &cfg.train,
            c,
        )?;
        legnn.push(start.elapsed().as_secs_f64());
        legnn_gather.push(trace.times.gather);
        events.push(trace.refresh_count + 1);
    }
    let backbone_seconds = median(backbone);
    let legnn_seconds = median(legnn);
    Ok(OverheadReport {
        num_nodes: bundle.meta.num_nodes,
        num_edges: bundle.graph.num_edges(),
        mask_iterations: cfg.train.mask_iterations,
        backbone_seconds,
        legnn_seconds,
        legnn_gather_seconds: median(legnn_gather),
        gather_events: events[0],
        gather_seconds: time_gather(
            bundle,
            &cfg.train,
            cfg.train.mask_iterations,
            cfg.repeats,
            cfg.gather_passes,
        )?,
        ratio: legnn_seconds / backbone_seconds,
    })
}

/// A 5-class SBM with about `edges` edges and average degree `degree`.
pub fn scaling_graph(edges: usize, degree: f64, seed: u64) -> Result<DatasetBundle> {
    let classes = 5usize;
    let nodes = ((2.0 * edges as f64 / degree).round() as usize).max(classes * 4);
    let m = nodes / classes;
    // Expected edges = C·p_in·m(m−1)/2 + p_out·C(C−1)/2·m², with p_out = p_in/10.
    let mf = m as f64;
    let cf = classes as f64;
    let weight = cf * mf * (mf - 1.0) / 2.0 + 0.1 * cf * (cf - 1.0) / 2.0 * mf * mf;
    let p_in = (edges as f64 / weight).min(1.0);
    gen_sbm(&SbmParams {
        classes,
        nodes_per_class: m,
        p_in,
        p_out: p_in / 10.0,
        feature_dim: 16,
        feature_shift: 2.0,
        seed,
        ..SbmParams::default()
    })
}

/// Gathering time across graph sizes and for doubled `M_e`.
pub fn bench_gather_scaling(cfg: &BenchConfig) -> Result<ScalingReport> {
    check(cfg)?;
    if cfg.scaling_edges.len() < 2 {
        return Err(Error::InvalidConfig(
            "scaling needs at least two edge counts".into(),
        ));
    }
    let m_e = cfg.train.mask_iterations;
    let point = |bundle: &DatasetBundle, m_e: usize| -> Result<ScalingPoint> {
        let t = time_gather(bundle, &cfg.train, m_e, cfg.repeats, cfg.gather_passes)?;
        let e = bundle.graph.num_edges();
        Ok(ScalingPoint {
            num_nodes: bundle.meta.num_nodes,
            num_edges: e,
            mask_iterations: m_e,
            gather_seconds: t,
            seconds_per_edge: t / e as f64,
        })
    };
    let mut edges = Vec::new();
    let mut largest = None;
    for &e in &cfg.scaling_edges {
        let bundle = scaling_graph(e, cfg.scaling_degree, cfg.train.seed)?;
        edges.push(point(&bundle, m_e)?);
        largest = Some(bundle);
    }
    let edge_ratio_of_ratios = edges
        .windows(2)
        .map(|w| {
            (w[1].gather_seconds / w[0].gather_seconds)
                / (w[1].num_edges as f64 / w[0].num_edges as f64)
        })
        .collect();
    let largest = largest.expect("at least two sizes");
    let low = point(&largest, m_e)?;
    let high = point(&largest, 2 * m_e)?;
    let mask_iterations_ratio = high.gather_seconds / low.gather_seconds;
    Ok(ScalingReport {
        edges,
        edge_ratio_of_ratios,
        mask_iterations: (low, high),
        mask_iterations_ratio,
    })
}
