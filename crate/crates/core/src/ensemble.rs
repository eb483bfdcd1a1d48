//! Bootstrapped neighbor contexts and symmetric label ensembling.
//!
//! A trained model labels `M_e` randomly masked views of the graph. For each
//! node the union of per-view argmax classes forms its high-probability
//! candidate set `Y^p`, and the union of per-view argmin classes its
//! low-probability set `Y^n`. Candidate weights are computed once from the
//! unmasked prediction and frozen in an [`EnsembleSnapshot`] until the next
//! gathering event.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{argmax, argmin, DenseMatrix};
use crate::error::{Error, Result};
use crate::gcn::GcnModel;
use crate::graph::{
    mask_nearest_scoped, mask_random_scoped, MaskScope, MaskStrategy, MaskedGraph, SparseGraph,
};
use crate::rng;

/// Boolean `N × C` candidate-label matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiLabelMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl MultiLabelMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    /// One set bit per row.
    pub fn from_singletons(labels: &[usize], cols: usize) -> Result<Self> {
        let mut m = Self::new(labels.len(), cols);
        for (i, &c) in labels.iter().enumerate() {
            if c >= cols {
                return Err(Error::shape("MultiLabelMatrix::from_singletons", cols, c));
            }
            m.set(i, c, true);
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_count(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&b| b).count()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn candidates(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
    }

    pub fn rows_nonempty(&self) -> bool {
        (0..self.rows).all(|i| self.row(i).iter().any(|&b| b))
    }

    /// Every bit set here is also set in `other`.
    pub fn is_subset_of(&self, other: &MultiLabelMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Row `i` as an integer with bit `j` set for class `j`. Requires `C ≤ 128`.
    pub fn to_bitmasks(&self) -> Result<Vec<u128>> {
        if self.cols > 128 {
            return Err(Error::InvalidConfig(format!(
                "bitmask encoding supports at most 128 classes, got {}",
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.candidates(i)
                    .fold(0u128, |mask, j| mask | (1u128 << j))
            })
            .collect())
    }

    pub fn from_bitmasks(masks: &[u128], cols: usize) -> Result<Self> {
        if cols > 128 {
            return Err(Error::InvalidConfig(format!(
                "bitmask encoding supports at most 128 classes, got {cols}"
            )));
        }
        let mut m = Self::new(masks.len(), cols);
        for (i, &mask) in masks.iter().enumerate() {
            if cols < 128 && mask >> cols != 0 {
                return Err(Error::InvalidConfig(format!(
                    "row {i} bitmask {mask} has bits beyond {cols} classes"
                )));
            }
            for j in 0..cols {
                m.set(i, j, mask & (1u128 << j) != 0);
            }
        }
        Ok(m)
    }
}

/// How frozen candidate weights are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Confidence normalized over the node's candidate set.
    #[default]
    Candidate,
    /// Confidence normalized over all classes (the denominator taken literally).
    Literal,
    /// Equal weight for every candidate.
    Uniform,
}

/// Gathered candidate sets plus their frozen loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSnapshot {
    pub yp: MultiLabelMatrix,
    pub yn: MultiLabelMatrix,
    pub positive_weights: DenseMatrix,
    pub negative_weights: DenseMatrix,
    pub source_epoch: usize,
}

impl EnsembleSnapshot {
    /// Builds the snapshot, computing weights from `probs` (the unmasked
    /// prediction). Positive weights use `Z`, negative weights use `1 − Z`.
    pub fn new(
        yp: MultiLabelMatrix,
        yn: MultiLabelMatrix,
        probs: &DenseMatrix,
        rule: WeightRule,
        source_epoch: usize,
    ) -> Result<Self> {
        for m in [&yp, &yn] {
            if (m.rows(), m.cols()) != probs.shape() {
                return Err(Error::shape(
                    "EnsembleSnapshot::new",
                    format!("{:?}", probs.shape()),
                    format!("({}, {})", m.rows(), m.cols()),
                ));
            }
        }
        let positive_weights = candidate_weights(&yp, probs, rule, |z| z);
        let negative_weights = candidate_weights(&yn, probs, rule, |z| 1.0 - z);
        Ok(Self {
            yp,
            yn,
            positive_weights,
            negative_weights,
            source_epoch,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.yp.rows()
    }
}

fn candidate_weights(
    candidates: &MultiLabelMatrix,
    probs: &DenseMatrix,
    rule: WeightRule,
    confidence: impl Fn(f64) -> f64,
) -> DenseMatrix {
    let mut w = DenseMatrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let row = probs.row(i);
        let denom = match rule {
            WeightRule::Candidate => candidates.candidates(i).map(|j| confidence(row[j])).sum(),
            WeightRule::Literal => row.iter().map(|&z| confidence(z)).sum(),
            WeightRule::Uniform => candidates.row_count(i) as f64,
        };
        let count = candidates.row_count(i);
        for j in candidates.candidates(i) {
            let num = match rule {
                WeightRule::Uniform => 1.0,
                _ => confidence(row[j]),
            };
            let value = if denom > 0.0 {
                num / denom
            } else {
                // every candidate has zero confidence: fall back to uniform
                1.0 / count as f64
            };
            w.set(i, j, value);
        }
    }
    w
}

/// Masking settings for building views.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaskConfig {
    pub rate: f64,
    #[serde(default)]
    pub strategy: MaskStrategy,
    #[serde(default)]
    pub scope: MaskScope,
}

/// `M_e` randomly masked views; view `v` draws from the stream `seed ⊕ v`.
pub fn bootstrap_views(
    graph: &SparseGraph,
    rate: f64,
    num_views: usize,
    seed: u64,
) -> Result<Vec<MaskedGraph<'_>>> {
    bootstrap_views_with(
        graph,
        None,
        &MaskConfig {
            rate,
            ..MaskConfig::default()
        },
        num_views,
        seed,
    )
}

/// Like [`bootstrap_views`] but honoring the full [`MaskConfig`]. Nearest
/// masking needs `features` and is deterministic, so all its views coincide.
pub fn bootstrap_views_with<'a>(
    graph: &'a SparseGraph,
    features: Option<&DenseMatrix>,
    config: &MaskConfig,
    num_views: usize,
    seed: u64,
) -> Result<Vec<MaskedGraph<'a>>> {
    if num_views == 0 {
        return Err(Error::InvalidConfig(
            "mask iterations must be at least 1".into(),
        ));
    }
    match config.strategy {
        MaskStrategy::Random => (0..num_views)
            .into_par_iter()
            .map(|v| {
                let mut stream = rng::stream(seed ^ v as u64);
                mask_random_scoped(graph, config.rate, config.scope, &mut stream)
            })
            .collect(),
        MaskStrategy::Nearest => {
            let features = features.ok_or_else(|| {
                Error::InvalidConfig("nearest-neighbor masking requires node features".into())
            })?;
            let view = mask_nearest_scoped(graph, features, config.rate, config.scope)?;
            Ok(vec![view; num_views])
        }
    }
}

/// Per-view argmax and argmin class of every node.
pub fn view_predictions(
    model: &GcnModel,
    views: &[MaskedGraph<'_>],
    x: &DenseMatrix,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let projected = model.project_input(x)?;
    views
        .par_iter()
        .map(|view| {
            let z = model.infer_projected(view, &projected)?;
            Ok(z.row_iter().map(|r| (argmax(r), argmin(r))).unzip())
        })
        .collect()
}

/// Labels every view with `model` (inference mode) and assembles `Y^p`,
/// `Y^n`; weights come from the prediction on the views' unmasked base graph.
pub fn gather_labels(
    model: &GcnModel,
    views: &[MaskedGraph<'_>],
    x: &DenseMatrix,
    rule: WeightRule,
    source_epoch: usize,
) -> Result<EnsembleSnapshot> {
    let base = views
        .first()
        .ok_or_else(|| Error::InvalidConfig("gather_labels needs at least one view".into()))?
        .base();
    if x.rows() != base.num_nodes() {
        return Err(Error::shape(
            "gather_labels",
            format!("{} feature rows", base.num_nodes()),
            x.rows(),
        ));
    }
    let c = model.num_classes();
    let n = base.num_nodes();
    let per_view = view_predictions(model, views, x)?;
    let mut yp = MultiLabelMatrix::new(n, c);
    let mut yn = MultiLabelMatrix::new(n, c);
    for (maxes, mins) in &per_view {
        for k in 0..n {
            yp.set(k, maxes[k], true);
            yn.set(k, mins[k], true);
        }
    }
    let probs = model.infer_projected(base, &model.project_input(x)?)?;
    EnsembleSnapshot::new(yp, yn, &probs, rule, source_epoch)
}

/// Probability that a majority vote over `p` neighbors, each wrong with
/// probability `alpha`, is wrong: `Σ_{j ≥ ⌈p/2⌉} C(p,j) αʲ (1−α)^{p−j}`.
///
/// For even `p` a tie counts as an error, so the result can exceed `alpha`.
pub fn voting_error_rate(p: usize, alpha: f64) -> f64 {
    assert!(p >= 1, "neighbor count must be positive");
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
    let start = p.div_ceil(2);
    if alpha == 0.0 {
        return 0.0;
    }
    if alpha == 1.0 {
        return 1.0;
    }
    let (la, lb) = (alpha.ln(), (1.0 - alpha).ln());
    // ln C(p, j) built incrementally from ln C(p, 0) = 0
    let mut ln_binom = 0.0;
    let mut total = 0.0;
    for j in 0..=p {
        if j > 0 {
            ln_binom += ((p - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j >= start {
            total += (ln_binom + j as f64 * la + (p - j) as f64 * lb).exp();
        }
    }
    total.min(1.0)
}

/// One gathering event in the debug dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDump {
    pub epoch: usize,
    pub num_classes: usize,
    pub yp: Vec<u128>,
    pub yn: Vec<u128>,
}

impl EnsembleDump {
    pub fn from_snapshot(snapshot: &EnsembleSnapshot) -> Result<Self> {
        Ok(Self {
            epoch: snapshot.source_epoch,
            num_classes: snapshot.yp.cols(),
            yp: snapshot.yp.to_bitmasks()?,
            yn: snapshot.yn.to_bitmasks()?,
        })
    }

    pub fn high(&self) -> Result<MultiLabelMatrix> {
        MultiLabelMatrix::from_bitmasks(&self.yp, self.num_classes)
    }

    pub fn low(&self) -> Result<MultiLabelMatrix> {
        MultiLabelMatrix::from_bitmasks(&self.yn, self.num_classes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
