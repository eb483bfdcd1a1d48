//! Planted-partition (stochastic block model) graphs with Gaussian features.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetBundle, DatasetMeta, Splits};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::noise::LabelSet;
use crate::rng::{self, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmParams {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Euclidean distance between any two class means.
    pub feature_shift: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            classes: 5,
            nodes_per_class: 100,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 16,
            feature_shift: 1.0,
            train_fraction: 0.05,
            val_fraction: 0.15,
            seed: 0,
        }
    }
}

impl SbmParams {
    pub fn num_nodes(&self) -> usize {
        self.classes * self.nodes_per_class
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.classes < 2 {
            problems.push(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.nodes_per_class == 0 {
            problems.push("nodes_per_class must be positive".to_string());
        }
        if !(self.p_out >= 0.0 && self.p_in > self.p_out && self.p_in <= 1.0) {
            problems.push(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            ));
        }
        if !(self.feature_shift > 0.0 && self.feature_shift.is_finite()) {
            problems.push(format!(
                "feature_shift must be positive, got {}",
                self.feature_shift
            ));
        }
        if self.feature_dim < self.classes {
            problems.push(format!(
                "feature_dim ({}) must be at least the number of classes ({})",
                self.feature_dim, self.classes
            ));
        }
        let (t, v) = (self.train_fraction, self.val_fraction);
        if !(t > 0.0 && v > 0.0 && t + v < 1.0) {
            problems.push(format!(
                "split fractions must be positive and sum below 1, got train={t} val={v}"
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Appends every `j` in `lo..hi` independently with probability `p`, skipping
/// ahead geometrically instead of drawing one Bernoulli per pair.
fn sample_segment<R: Rng + ?Sized>(
    i: usize,
    lo: usize,
    hi: usize,
    p: f64,
    rng: &mut R,
    edges: &mut Vec<(usize, usize)>,
) {
    if p <= 0.0 || lo >= hi {
        return;
    }
    let skip = Geometric::new(p).expect("probability validated");
    let mut j = lo;
    loop {
        let gap = skip.sample(rng);
        j = match usize::try_from(gap).ok().and_then(|g| j.checked_add(g)) {
            Some(next) => next,
            None => return,
        };
        if j >= hi {
            return;
        }
        edges.push((i, j));
        j += 1;
    }
}

/// Nodes are numbered class by class: node `i` belongs to class
/// `i / nodes_per_class`. Each intra-class pair is joined with probability
/// `p_in`, each inter-class pair with `p_out`. Class `c` has features
/// `(shift/√2)·e_c + N(0, I)`.
pub fn gen_sbm(params: &SbmParams) -> Result<DatasetBundle> {
    params.validate()?;
    let m = params.nodes_per_class;
    let c = params.classes;
    let n = params.num_nodes();

    let mut graph_rng = rng::stream(rng::derive_seed(params.seed, tags::GRAPH));
    let mut edges = Vec::new();
    for i in 0..n {
        let block_end = (i / m + 1) * m;
        sample_segment(i, i + 1, block_end, params.p_in, &mut graph_rng, &mut edges);
        sample_segment(i, block_end, n, params.p_out, &mut graph_rng, &mut edges);
    }

    let mut feature_rng = rng::stream(rng::derive_seed(params.seed, tags::FEATURES));
    let offset = params.feature_shift / std::f64::consts::SQRT_2;
    let features = DenseMatrix::from_fn(n, params.feature_dim, |i, j| {
        let noise: f64 = StandardNormal.sample(&mut feature_rng);
        if j == i / m {
            offset + noise
        } else {
            noise
        }
    });

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(rng::derive_seed(params.seed, tags::SPLIT)));
    let n_train = ((params.train_fraction * n as f64).round() as usize).max(1);
    let n_val = ((params.val_fraction * n as f64).round() as usize).max(1);
    if n_train + n_val >= n {
        return Err(Error::InvalidConfig(format!(
            "{n} nodes are too few for the requested splits"
        )));
    }
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let splits = Splits {
        train: sorted(&order[..n_train]),
        val: sorted(&order[n_train..n_train + n_val]),
        test: sorted(&order[n_train + n_val..]),
    };

    let bundle = DatasetBundle {
        graph: build_graph(&edges, n)?,
        features,
        clean_labels: LabelSet::clean((0..n).map(|i| Some(i / m)).collect()),
        splits,
        meta: DatasetMeta {
            name: format!("sbm-c{c}-m{m}"),
            num_nodes: n,
            num_features: params.feature_dim,
            num_classes: c,
        },
    };
    bundle.validate()?;
    Ok(bundle)
}
