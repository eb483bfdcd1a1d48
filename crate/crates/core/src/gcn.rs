//! Two-layer GCN with softmax output, its exact backward pass, and SGD with
//! momentum and weight decay.
//!
//! The forward computation is
//!
//! ```text
//! P  = Ã · (X · W1)
//! H  = dropout(relu(P))
//! Z  = softmax(Ã · (H · W2))
//! ```
//!
//! Gradients enter [`gcn_backward`] with respect to `Z` (probabilities), so
//! any loss defined on probabilities can be chained through without knowing
//! about the softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{softmax_rows, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph::Propagate;

/// Probabilities are clamped to this before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcnHyper {
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for GcnHyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            dropout: 0.5,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    momentum1: DenseMatrix,
    momentum2: DenseMatrix,
    pub hyper: GcnHyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Intermediates of one forward pass, consumed by [`gcn_backward`].
pub struct ForwardCache<'a> {
    graph: &'a dyn Propagate,
    x: &'a DenseMatrix,
    w2: DenseMatrix,
    pre_activation: DenseMatrix,
    hidden: DenseMatrix,
    /// Per-entry dropout multiplier (0 or 1/(1-p)); `None` when dropout is off.
    dropout_scale: Option<Vec<f64>>,
    probs: DenseMatrix,
}

impl ForwardCache<'_> {
    pub fn probs(&self) -> &DenseMatrix {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
}

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseMatrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound))
}

impl GcnModel {
    /// Glorot-uniform weights, zero momentum buffers.
    pub fn new<R: Rng + ?Sized>(
        num_features: usize,
        num_classes: usize,
        hyper: GcnHyper,
        rng: &mut R,
    ) -> Result<Self> {
        if hyper.hidden == 0 || num_features == 0 || num_classes == 0 {
            return Err(Error::InvalidConfig(format!(
                "model dimensions must be positive (d={num_features}, h={}, C={num_classes})",
                hyper.hidden
            )));
        }
        if !(0.0..1.0).contains(&hyper.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                hyper.dropout
            )));
        }
        let w1 = glorot(num_features, hyper.hidden, rng);
        let w2 = glorot(hyper.hidden, num_classes, rng);
        Ok(Self::from_weights(w1, w2, hyper))
    }

    pub fn from_weights(w1: DenseMatrix, w2: DenseMatrix, hyper: GcnHyper) -> Self {
        let momentum1 = DenseMatrix::zeros(w1.rows(), w1.cols());
        let momentum2 = DenseMatrix::zeros(w2.rows(), w2.cols());
        let hidden = w2.rows();
        Self {
            w1,
            w2,
            momentum1,
            momentum2,
            hyper: GcnHyper { hidden, ..hyper },
        }
    }

    pub fn num_features(&self) -> usize {
        self.w1.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    pub fn momentum_buffers(&self) -> (&DenseMatrix, &DenseMatrix) {
        (&self.momentum1, &self.momentum2)
    }

    /// `X · W1`; shared by every view during label gathering.
    pub fn project_input(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.w1.rows() {
            return Err(Error::shape(
                "gcn_forward",
                format!("{} feature columns", self.w1.rows()),
                x.cols(),
            ));
        }
        x.matmul(&self.w1)
    }

    /// Inference-mode probabilities from a precomputed `X · W1`.
    pub fn infer_projected(
        &self,
        graph: &dyn Propagate,
        projected: &DenseMatrix,
    ) -> Result<DenseMatrix> {
        let mut hidden = graph.spmm(projected)?;
        hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = graph.spmm(&hidden.matmul(&self.w2)?)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("gcn_forward logits"));
        }
        softmax_rows(&mut logits);
        Ok(logits)
    }
}

/// Forward pass. `mode = Infer` disables dropout and never touches `rng`.
pub fn gcn_forward<'a, R: Rng + ?Sized>(
    model: &GcnModel,
    graph: &'a dyn Propagate,
    x: &'a DenseMatrix,
    mode: Mode,
    rng: &mut R,
) -> Result<(DenseMatrix, ForwardCache<'a>)> {
    if x.rows() != graph.num_nodes() {
        return Err(Error::shape(
            "gcn_forward",
            format!("{} feature rows", graph.num_nodes()),
            x.rows(),
        ));
    }
    let projected = model.project_input(x)?;
    let pre_activation = graph.spmm(&projected)?;
    if !pre_activation.is_finite() {
        return Err(Error::NonFinite("gcn_forward hidden layer"));
    }
    let mut hidden = pre_activation.map(|v| v.max(0.0));

    let p = model.hyper.dropout;
    let dropout_scale = if mode == Mode::Train && p > 0.0 {
        let keep_scale = 1.0 / (1.0 - p);
        let scale: Vec<f64> = (0..hidden.data().len())
            .map(|_| {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        hidden
            .data_mut()
            .iter_mut()
            .zip(&scale)
            .for_each(|(h, s)| *h *= s);
        Some(scale)
    } else {
        None
    };

    let mut probs = graph.spmm(&hidden.matmul(&model.w2)?)?;
    if !probs.is_finite() {
        return Err(Error::NonFinite("gcn_forward logits"));
    }
    softmax_rows(&mut probs);

    Ok((
        probs.clone(),
        ForwardCache {
            graph,
            x,
            w2: model.w2.clone(),
            pre_activation,
            hidden,
            dropout_scale,
            probs,
        },
    ))
}

/// Inference-mode forward pass without a cache.
pub fn gcn_infer(model: &GcnModel, graph: &dyn Propagate, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.rows() != graph.num_nodes() {
        return Err(Error::shape(
            "gcn_forward",
            format!("{} feature rows", graph.num_nodes()),
            x.rows(),
        ));
    }
    model.infer_projected(graph, &model.project_input(x)?)
}

/// Chains `∂L/∂Z` through the row-wise softmax: `Z ⊙ (dZ − ⟨dZ, Z⟩)`.
pub fn softmax_backward(probs: &DenseMatrix, d_probs: &DenseMatrix) -> Result<DenseMatrix> {
    if probs.shape() != d_probs.shape() {
        return Err(Error::shape(
            "softmax_backward",
            format!("{:?}", probs.shape()),
            format!("{:?}", d_probs.shape()),
        ));
    }
    let mut out = DenseMatrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let z = probs.row(i);
        let dz = d_probs.row(i);
        let inner: f64 = z.iter().zip(dz).map(|(a, b)| a * b).sum();
        for (o, (zj, dzj)) in out.row_mut(i).iter_mut().zip(z.iter().zip(dz)) {
            *o = zj * (dzj - inner);
        }
    }
    Ok(out)
}

pub fn gcn_backward(cache: &ForwardCache<'_>, d_probs: &DenseMatrix) -> Result<Gradients> {
    let d_logits = softmax_backward(&cache.probs, d_probs)?;
    let d_hw = cache.graph.spmm_t(&d_logits)?;
    let w2 = cache.hidden.t_matmul(&d_hw)?;
    let mut d_hidden = d_hw.matmul_t(&cache.w2)?;
    if let Some(scale) = &cache.dropout_scale {
        d_hidden
            .data_mut()
            .iter_mut()
            .zip(scale)
            .for_each(|(g, s)| *g *= s);
    }
    d_hidden
        .data_mut()
        .iter_mut()
        .zip(cache.pre_activation.data())
        .for_each(|(g, &p)| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
    let d_projected = cache.graph.spmm_t(&d_hidden)?;
    let w1 = cache.x.t_matmul(&d_projected)?;
    if !w1.is_finite() || !w2.is_finite() {
        return Err(Error::NonFinite("gcn_backward"));
    }
    Ok(Gradients { w1, w2 })
}

/// `buffer ← μ·buffer + g + λ·W;  W ← W − lr·buffer` for both layers.
pub fn sgd_step(model: &mut GcnModel, grads: &Gradients) -> Result<()> {
    if grads.w1.shape() != model.w1.shape() || grads.w2.shape() != model.w2.shape() {
        return Err(Error::shape(
            "sgd_step",
            format!("{:?}/{:?}", model.w1.shape(), model.w2.shape()),
            format!("{:?}/{:?}", grads.w1.shape(), grads.w2.shape()),
        ));
    }
    if !grads.w1.is_finite() || !grads.w2.is_finite() {
        return Err(Error::NonFinite("sgd_step gradients"));
    }
    let GcnHyper {
        lr,
        momentum,
        weight_decay,
        ..
    } = model.hyper;
    for (w, buf, g) in [
        (&mut model.w1, &mut model.momentum1, &grads.w1),
        (&mut model.w2, &mut model.momentum2, &grads.w2),
    ] {
        for ((wv, bv), &gv) in w
            .data_mut()
            .iter_mut()
            .zip(buf.data_mut().iter_mut())
            .zip(g.data())
        {
            *bv = momentum * *bv + gv + weight_decay * *wv;
            *wv -= lr * *bv;
        }
        if !w.is_finite() {
            return Err(Error::NonFinite("sgd_step update"));
        }
    }
    Ok(())
}

/// Mean over `index_set` of `−log Z[i, yᵢ]`, with its gradient w.r.t. `Z`.
pub fn cross_entropy(
    probs: &DenseMatrix,
    labels: &[Option<usize>],
    index_set: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if index_set.is_empty() {
        return Err(Error::EmptySet("cross_entropy"));
    }
    if labels.len() != probs.rows() {
        return Err(Error::shape("cross_entropy", probs.rows(), labels.len()));
    }
    let scale = 1.0 / index_set.len() as f64;
    let mut grad = DenseMatrix::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    for &i in index_set {
        let y = match labels.get(i).copied().flatten() {
            Some(y) if y < probs.cols() => y,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "node {i} has no valid label for cross-entropy (got {other:?})"
                )))
            }
        };
        let z = probs.get(i, y);
        loss -= z.max(LOG_CLAMP).ln() * scale;
        if z > LOG_CLAMP {
            let g = grad.get(i, y) - scale / z;
            grad.set(i, y, g);
        }
    }
    Ok((loss, grad))
}
