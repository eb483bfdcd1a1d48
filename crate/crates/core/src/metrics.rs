//! Accuracy and gathered-label quality.

use serde::{Deserialize, Serialize};

use crate::ensemble::MultiLabelMatrix;
use crate::error::{Error, Result};
use crate::noise::LabelSet;

/// Precision/recall/F1 of a candidate-label matrix against clean labels, plus
/// clean-label coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelQuality {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub coverage: f64,
}

/// Which nodes label-quality metrics are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSplit {
    /// Every node outside the training split.
    #[default]
    All,
    Test,
    /// Nodes carrying no (noisy) label: the test split.
    Unlabeled,
}

impl std::str::FromStr for MetricSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(MetricSplit::All),
            "test" => Ok(MetricSplit::Test),
            "unlabeled" => Ok(MetricSplit::Unlabeled),
            other => Err(Error::InvalidConfig(format!(
                "unknown metric split {other:?} (expected all, test or unlabeled)"
            ))),
        }
    }
}

fn clean_label(clean: &LabelSet, i: usize) -> Result<usize> {
    clean
        .get(i)
        .ok_or_else(|| Error::InvalidConfig(format!("node {i} has no clean label")))
}

pub fn accuracy(predictions: &[usize], clean: &LabelSet, index_set: &[usize]) -> Result<f64> {
    if index_set.is_empty() {
        return Err(Error::EmptySet("accuracy"));
    }
    let mut hits = 0usize;
    for &i in index_set {
        let pred = *predictions.get(i).ok_or(Error::NodeOutOfRange {
            index: i,
            num_nodes: predictions.len(),
        })?;
        if pred == clean_label(clean, i)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / index_set.len() as f64)
}

/// Each set bit is an independent prediction: precision is the fraction of
/// set bits equal to the clean label, recall the fraction of nodes whose
/// clean label is set.
pub fn multilabel_prf(
    labels: &MultiLabelMatrix,
    clean: &LabelSet,
    index_set: &[usize],
) -> Result<LabelQuality> {
    if index_set.is_empty() {
        return Err(Error::EmptySet("multilabel_prf"));
    }
    let mut set_bits = 0usize;
    let mut hits = 0usize;
    for &i in index_set {
        if i >= labels.rows() {
            return Err(Error::NodeOutOfRange {
                index: i,
                num_nodes: labels.rows(),
            });
        }
        let y = clean_label(clean, i)?;
        set_bits += labels.row_count(i);
        if y < labels.cols() && labels.get(i, y) {
            hits += 1;
        }
    }
    if set_bits == 0 {
        return Err(Error::EmptySet("multilabel_prf (no set bits)"));
    }
    let precision = hits as f64 / set_bits as f64;
    let recall = hits as f64 / index_set.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(LabelQuality {
        precision,
        recall,
        f1,
        coverage: recall,
    })
}

/// Fraction of indexed nodes whose clean label is among their candidates.
pub fn clean_coverage(
    labels: &MultiLabelMatrix,
    clean: &LabelSet,
    index_set: &[usize],
) -> Result<f64> {
    if index_set.is_empty() {
        return Err(Error::EmptySet("clean_coverage"));
    }
    let mut hits = 0usize;
    for &i in index_set {
        let y = clean_label(clean, i)?;
        if i < labels.rows() && y < labels.cols() && labels.get(i, y) {
            hits += 1;
        }
    }
    Ok(hits as f64 / index_set.len() as f64)
}
