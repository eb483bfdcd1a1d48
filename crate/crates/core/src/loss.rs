//! Weighted partial-label losses on gathered candidate sets.
//!
//! `L^p` is a confidence-weighted cross-entropy over the high-probability
//! candidates. `L^n` applies the same construction to `1 − Z` over the
//! low-probability candidates, pushing their probabilities toward zero.
//! Both average over all `N` nodes and return gradients w.r.t. `Z`.

use crate::dense::DenseMatrix;
use crate::ensemble::EnsembleSnapshot;
use crate::error::{Error, Result};
use crate::gcn::LOG_CLAMP;

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub positive: f64,
    pub negative: f64,
    pub d_probs: DenseMatrix,
}

fn check(probs: &DenseMatrix, snapshot: &EnsembleSnapshot, op: &'static str) -> Result<()> {
    if probs.rows() == 0 {
        return Err(Error::EmptySet(op));
    }
    if probs.shape() != snapshot.positive_weights.shape() {
        return Err(Error::shape(
            op,
            format!("{:?}", snapshot.positive_weights.shape()),
            format!("{:?}", probs.shape()),
        ));
    }
    Ok(())
}

/// Shared kernel: `(1/N) Σᵢ Σⱼ wᵢⱼ · −log(max(g(Zᵢⱼ), ε))` where `g` is
/// either the identity or `1 − z`.
fn weighted_nll(
    probs: &DenseMatrix,
    weights: &DenseMatrix,
    complement: bool,
) -> (f64, DenseMatrix) {
    let n = probs.rows() as f64;
    let mut grad = DenseMatrix::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    for i in 0..probs.rows() {
        let z = probs.row(i);
        let w = weights.row(i);
        let g = grad.row_mut(i);
        for j in 0..z.len() {
            if w[j] == 0.0 {
                continue;
            }
            let arg = if complement { 1.0 - z[j] } else { z[j] };
            loss -= w[j] * arg.max(LOG_CLAMP).ln();
            if arg > LOG_CLAMP {
                let d = w[j] / (n * arg);
                g[j] = if complement { d } else { -d };
            }
        }
    }
    (loss / n, grad)
}

/// `L^p(Z, Y^p)` with the snapshot's frozen positive weights.
pub fn positive_loss(
    probs: &DenseMatrix,
    snapshot: &EnsembleSnapshot,
) -> Result<(f64, DenseMatrix)> {
    check(probs, snapshot, "positive_loss")?;
    Ok(weighted_nll(probs, &snapshot.positive_weights, false))
}

/// `L^n(Z, Y^n) = L^p(O − Z, Y^n)`.
pub fn negative_loss(
    probs: &DenseMatrix,
    snapshot: &EnsembleSnapshot,
) -> Result<(f64, DenseMatrix)> {
    check(probs, snapshot, "negative_loss")?;
    Ok(weighted_nll(probs, &snapshot.negative_weights, true))
}

pub fn bidirectional_loss(probs: &DenseMatrix, snapshot: &EnsembleSnapshot) -> Result<LossReport> {
    bidirectional_loss_with(probs, snapshot, true)
}

/// `L^p + L^n`, or `L^p` alone when `include_negative` is false.
pub fn bidirectional_loss_with(
    probs: &DenseMatrix,
    snapshot: &EnsembleSnapshot,
    include_negative: bool,
) -> Result<LossReport> {
    let (positive, mut d_probs) = positive_loss(probs, snapshot)?;
    let negative = if include_negative {
        let (value, grad) = negative_loss(probs, snapshot)?;
        d_probs.add_assign(&grad)?;
        value
    } else {
        0.0
    };
    Ok(LossReport {
        total: positive + negative,
        positive,
        negative,
        d_probs,
    })
}
