//! Synthetic label noise: symmetric and pair-flip transition matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Flip uniformly to any other class.
    Symmetric,
    /// Flip class `i` to `(i + 1) mod C`.
    Pair,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "symmetric" | "sym" => Ok(NoiseKind::Symmetric),
            "pair" => Ok(NoiseKind::Pair),
            other => Err(Error::InvalidNoise(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub tau: f64,
    pub num_classes: usize,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, tau: f64, num_classes: usize) -> Result<Self> {
        let spec = Self {
            kind,
            tau,
            num_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidNoise(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidNoise(format!(
                "noise rate must lie in [0, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRole {
    Clean,
    Noisy,
}

/// One optional class id per node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub labels: Vec<Option<usize>>,
    pub role: LabelRole,
}

impl LabelSet {
    pub fn clean(labels: Vec<Option<usize>>) -> Self {
        Self {
            labels,
            role: LabelRole::Clean,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.labels.get(i).copied().flatten()
    }

    /// Keeps only the labels of `indices`; every other node becomes unlabeled.
    pub fn restrict(&self, indices: &[usize]) -> LabelSet {
        let mut labels = vec![None; self.labels.len()];
        for &i in indices {
            labels[i] = self.labels[i];
        }
        LabelSet {
            labels,
            role: self.role,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad: Vec<String> = self
            .labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Some(c) if *c >= num_classes => {
                    Some(format!("node {i}: class {c} >= num_classes {num_classes}"))
                }
                _ => None,
            })
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidDataset(bad))
        }
    }
}

/// Row `i` gives the probability of class `i` being reported as each class.
pub fn build_transition(spec: &NoiseSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    let c = spec.num_classes;
    let tau = spec.tau;
    let t = match spec.kind {
        NoiseKind::Symmetric => {
            let off = tau / (c - 1) as f64;
            DenseMatrix::from_fn(c, c, |i, j| if i == j { 1.0 - tau } else { off })
        }
        NoiseKind::Pair => DenseMatrix::from_fn(c, c, |i, j| {
            if i == j {
                1.0 - tau
            } else if j == (i + 1) % c {
                tau
            } else {
                0.0
            }
        }),
    };
    Ok(t)
}

/// Resamples every present label from its row of `transition`.
pub fn flip_labels<R: Rng + ?Sized>(
    clean: &LabelSet,
    transition: &DenseMatrix,
    rng: &mut R,
) -> Result<LabelSet> {
    let c = transition.rows();
    if transition.cols() != c {
        return Err(Error::shape(
            "flip_labels",
            "square transition matrix",
            format!("{:?}", transition.shape()),
        ));
    }
    for i in 0..c {
        let row = transition.row(i);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidNoise(format!(
                "transition row {i} is not a probability distribution"
            )));
        }
    }
    clean.validate(c)?;
    let labels = clean
        .labels
        .iter()
        .map(|label| label.map(|y| sample_row(transition.row(y), rng)))
        .collect();
    Ok(LabelSet {
        labels,
        role: LabelRole::Noisy,
    })
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // u landed in the rounding slack at the top; take the last nonzero class.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn symmetric_c3() {
        let t = build_transition(&NoiseSpec::new(NoiseKind::Symmetric, 0.3, 3).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.7 } else { 0.15 };
                assert!((t.get(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pair_c3_wraps() {
        let t = build_transition(&NoiseSpec::new(NoiseKind::Pair, 0.4, 3).unwrap()).unwrap();
        let expect = [[0.6, 0.4, 0.0], [0.0, 0.6, 0.4], [0.4, 0.0, 0.6]];
        for (i, row) in expect.iter().enumerate() {
            assert_eq!(t.row(i), row);
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        for kind in [NoiseKind::Symmetric, NoiseKind::Pair] {
            let t = build_transition(&NoiseSpec::new(kind, 0.0, 4).unwrap()).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(t.get(i, j), if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(NoiseSpec::new(NoiseKind::Symmetric, 0.3, 1).is_err());
        assert!(NoiseSpec::new(NoiseKind::Pair, 1.0, 3).is_err());
        assert!(NoiseSpec::new(NoiseKind::Pair, -0.1, 3).is_err());
        assert!("bogus".parse::<NoiseKind>().is_err());
        assert_eq!("sym".parse::<NoiseKind>().unwrap(), NoiseKind::Symmetric);
    }

    #[test]
    fn identity_transition_preserves_labels() {
        let clean = LabelSet::clean(vec![Some(0), None, Some(2), Some(1)]);
        let t = build_transition(&NoiseSpec::new(NoiseKind::Symmetric, 0.0, 3).unwrap()).unwrap();
        let noisy = flip_labels(&clean, &t, &mut rng::stream(4)).unwrap();
        assert_eq!(noisy.labels, clean.labels);
        assert_eq!(noisy.role, LabelRole::Noisy);
    }

    #[test]
    fn half_flip_binary_within_three_sigma() {
        let n = 100_000;
        let clean = LabelSet::clean(vec![Some(0); n]);
        let t = build_transition(&NoiseSpec::new(NoiseKind::Symmetric, 0.5, 2).unwrap()).unwrap();
        let noisy = flip_labels(&clean, &t, &mut rng::stream(17)).unwrap();
        let flipped = noisy.labels.iter().filter(|l| **l == Some(1)).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((flipped - 0.5 * n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn same_seed_same_noise() {
        let clean = LabelSet::clean((0..500).map(|i| Some(i % 4)).collect());
        let t = build_transition(&NoiseSpec::new(NoiseKind::Pair, 0.3, 4).unwrap()).unwrap();
        let a = flip_labels(&clean, &t, &mut rng::stream(8)).unwrap();
        let b = flip_labels(&clean, &t, &mut rng::stream(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_stochastic_transition() {
        let clean = LabelSet::clean(vec![Some(0)]);
        let t = DenseMatrix::from_rows(&[vec![0.5, 0.4], vec![0.0, 1.0]]).unwrap();
        assert!(flip_labels(&clean, &t, &mut rng::stream(0)).is_err());
    }
}
