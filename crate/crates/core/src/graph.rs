//! Sparse graph storage, symmetric normalization and neighbor masking.
//!
//! A [`SparseGraph`] is stored in canonical CSR form: rows are target nodes,
//! columns are the neighbors they aggregate from, columns strictly increase
//! within a row and every row carries a self-loop once built. Masked views
//! ([`MaskedGraph`]) keep a reference to the base structure and a per-entry
//! keep flag, so producing many views never copies the index arrays.

use log::warn;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Anything that can act as the propagation operator `Ã` of a GCN layer.
pub trait Propagate: Sync {
    fn num_nodes(&self) -> usize;

    /// `Ã · x`.
    fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix>;

    /// `Ãᵀ · x`.
    fn spmm_t(&self, x: &DenseMatrix) -> Result<DenseMatrix>;

    /// Materializes the operator; intended for tests and small graphs.
    fn to_dense(&self) -> DenseMatrix;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// What [`SparseGraph::from_edges`] had to clean up in its input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub duplicate_edges: usize,
    pub self_edges: usize,
}

/// Builds `Â = A + I` from an undirected edge list with unit values.
///
/// Duplicate edges (in either orientation) and explicit self-edges are
/// dropped with a warning.
pub fn build_graph(edges: &[(usize, usize)], num_nodes: usize) -> Result<SparseGraph> {
    let (graph, report) = SparseGraph::from_edges(edges, num_nodes)?;
    if report.duplicate_edges > 0 {
        warn!(
            "dropped {} duplicate edge(s) while building graph",
            report.duplicate_edges
        );
    }
    if report.self_edges > 0 {
        warn!(
            "dropped {} explicit self-edge(s); self-loops are added implicitly",
            report.self_edges
        );
    }
    Ok(graph)
}

/// Returns a copy whose values are `1/√(d̂ᵢ·d̂ⱼ)` with `d̂` the row degree.
pub fn normalize(graph: &SparseGraph) -> SparseGraph {
    let degrees: Vec<f64> = (0..graph.num_nodes)
        .map(|i| graph.degree(i) as f64)
        .collect();
    let mut out = graph.clone();
    for i in 0..graph.num_nodes {
        for e in graph.row_range(i) {
            let j = graph.col_indices[e];
            out.values[e] = 1.0 / (degrees[i] * degrees[j]).sqrt();
        }
    }
    out
}

impl SparseGraph {
    pub fn from_edges(
        edges: &[(usize, usize)],
        num_nodes: usize,
    ) -> Result<(SparseGraph, BuildReport)> {
        let mut report = BuildReport::default();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(src, dst) in edges {
            for index in [src, dst] {
                if index >= num_nodes {
                    return Err(Error::NodeOutOfRange { index, num_nodes });
                }
            }
            if src == dst {
                report.self_edges += 1;
                continue;
            }
            adjacency[src].push(dst);
            adjacency[dst].push(src);
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        let mut col_indices = Vec::with_capacity(2 * edges.len() + num_nodes);
        row_offsets.push(0);
        for (i, row) in adjacency.iter_mut().enumerate() {
            row.push(i);
            row.sort_unstable();
            let before = row.len();
            row.dedup();
            // Each duplicate undirected edge shows up once in each endpoint's row.
            report.duplicate_edges += before - row.len();
            col_indices.extend_from_slice(row);
            row_offsets.push(col_indices.len());
        }
        report.duplicate_edges /= 2;
        let values = vec![1.0; col_indices.len()];
        Ok((
            SparseGraph {
                num_nodes,
                row_offsets,
                col_indices,
                values,
            },
            report,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Stored directed entries, self-loops included.
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Undirected edges excluding self-loops.
    pub fn num_edges(&self) -> usize {
        (self.nnz() - self.num_nodes) / 2
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_range(i)]
    }

    /// Row degree of `Â` (self-loop counted).
    pub fn degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    /// Entry value for `(i, j)`, or `None` when not stored.
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.row_range(i);
        self.col_indices[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[range.start + k])
    }

    /// Each undirected non-loop edge once, as `(lo, hi)`.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for i in 0..self.num_nodes {
            for &j in self.neighbors(i) {
                if j > i {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn self_loop_entry(&self, i: usize) -> Option<usize> {
        let range = self.row_range(i);
        self.col_indices[range.clone()]
            .binary_search(&i)
            .ok()
            .map(|k| range.start + k)
    }

    /// Checks the canonical-form invariants; used by loaders and tests.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.row_offsets.len() != self.num_nodes + 1 {
            problems.push(format!(
                "row_offsets has length {}, expected {}",
                self.row_offsets.len(),
                self.num_nodes + 1
            ));
        } else {
            if self.row_offsets.windows(2).any(|w| w[0] > w[1]) {
                problems.push("row_offsets is not nondecreasing".into());
            }
            if self.row_offsets[self.num_nodes] != self.col_indices.len()
                || self.col_indices.len() != self.values.len()
            {
                problems.push("row_offsets[N], col_indices and values disagree in length".into());
            } else {
                for i in 0..self.num_nodes {
                    let row = self.neighbors(i);
                    if row.iter().any(|&j| j >= self.num_nodes) {
                        problems.push(format!("row {i} has an out-of-range column"));
                    }
                    if row.windows(2).any(|w| w[0] >= w[1]) {
                        problems.push(format!("row {i} is not strictly increasing"));
                    }
                    if self.self_loop_entry(i).is_none() {
                        problems.push(format!("row {i} has no self-loop"));
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidDataset(problems))
        }
    }
}

fn csr_spmm(offsets: &[usize], cols: &[usize], values: &[f64], x: &DenseMatrix) -> DenseMatrix {
    use rayon::prelude::*;
    let n = offsets.len() - 1;
    let width = x.cols();
    let mut out = DenseMatrix::zeros(n, width);
    if width == 0 {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, out_row)| {
            for e in offsets[i]..offsets[i + 1] {
                let v = values[e];
                if v == 0.0 {
                    continue;
                }
                for (o, &xv) in out_row.iter_mut().zip(x.row(cols[e])) {
                    *o += v * xv;
                }
            }
        });
    out
}

fn csr_spmm_t(offsets: &[usize], cols: &[usize], values: &[f64], x: &DenseMatrix) -> DenseMatrix {
    let n = offsets.len() - 1;
    let mut out = DenseMatrix::zeros(n, x.cols());
    for i in 0..n {
        for e in offsets[i]..offsets[i + 1] {
            let v = values[e];
            if v == 0.0 {
                continue;
            }
            for (o, &xv) in out.row_mut(cols[e]).iter_mut().zip(x.row(i)) {
                *o += v * xv;
            }
        }
    }
    out
}

fn check_rows(op: &'static str, n: usize, x: &DenseMatrix) -> Result<()> {
    if x.rows() != n {
        return Err(Error::shape(
            op,
            format!("{n} rows"),
            format!("{} rows", x.rows()),
        ));
    }
    Ok(())
}

impl Propagate for SparseGraph {
    fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows("spmm", self.num_nodes, x)?;
        Ok(csr_spmm(
            &self.row_offsets,
            &self.col_indices,
            &self.values,
            x,
        ))
    }

    fn spmm_t(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        // Built graphs are structurally and numerically symmetric.
        self.spmm(x)
    }

    fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for i in 0..self.num_nodes {
            for e in self.row_range(i) {
                m.set(i, self.col_indices[e], self.values[e]);
            }
        }
        m
    }
}

/// How masked entries are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    /// Uniformly at random without replacement.
    #[default]
    Random,
    /// The neighbors closest in feature space (Euclidean).
    Nearest,
}

/// Whether a masked neighbor loses one directed entry or the whole edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScope {
    /// Only the incoming entry of the masking node is dropped; views may be asymmetric.
    #[default]
    Directed,
    /// Both directions of a chosen edge are dropped.
    Undirected,
}

/// A masked view of a base graph with weights renormalized on the kept structure.
#[derive(Debug, Clone)]
pub struct MaskedGraph<'a> {
    base: &'a SparseGraph,
    kept: Vec<bool>,
    values: Vec<f64>,
}

impl<'a> MaskedGraph<'a> {
    /// Wraps a keep-flag vector (one per base entry) and renormalizes.
    /// Self-loops are forced on.
    pub fn from_kept(base: &'a SparseGraph, mut kept: Vec<bool>) -> Result<Self> {
        if kept.len() != base.nnz() {
            return Err(Error::shape(
                "MaskedGraph::from_kept",
                base.nnz(),
                kept.len(),
            ));
        }
        for i in 0..base.num_nodes {
            if let Some(e) = base.self_loop_entry(i) {
                kept[e] = true;
            }
        }
        let degrees: Vec<f64> = (0..base.num_nodes)
            .map(|i| base.row_range(i).filter(|&e| kept[e]).count() as f64)
            .collect();
        let values = (0..base.num_nodes)
            .flat_map(|i| base.row_range(i).map(move |e| (i, e)))
            .map(|(i, e)| {
                if kept[e] {
                    1.0 / (degrees[i] * degrees[base.col_indices[e]]).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { base, kept, values })
    }

    /// The unmasked view of `base`.
    pub fn full(base: &'a SparseGraph) -> Self {
        Self::from_kept(base, vec![true; base.nnz()]).expect("length matches by construction")
    }

    pub fn base(&self) -> &'a SparseGraph {
        self.base
    }

    pub fn kept(&self) -> &[bool] {
        &self.kept
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_kept(&self, i: usize, j: usize) -> bool {
        let range = self.base.row_range(i);
        self.base.col_indices[range.clone()]
            .binary_search(&j)
            .map(|k| self.kept[range.start + k])
            .unwrap_or(false)
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.base.row_range(i);
        let k = self.base.col_indices[range.clone()]
            .binary_search(&j)
            .ok()?;
        let e = range.start + k;
        self.kept[e].then(|| self.values[e])
    }

    /// Kept-entry count of row `i`, self-loop included.
    pub fn degree(&self, i: usize) -> usize {
        self.base.row_range(i).filter(|&e| self.kept[e]).count()
    }

    /// Number of non-self entries removed from row `i`.
    pub fn removed_in_row(&self, i: usize) -> usize {
        self.base.row_range(i).filter(|&e| !self.kept[e]).count()
    }

    /// Compacts the view into a standalone graph with the renormalized values.
    pub fn to_sparse(&self) -> SparseGraph {
        let n = self.base.num_nodes;
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..n {
            for e in self.base.row_range(i) {
                if self.kept[e] {
                    col_indices.push(self.base.col_indices[e]);
                    values.push(self.values[e]);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseGraph {
            num_nodes: n,
            row_offsets,
            col_indices,
            values,
        }
    }
}

impl Propagate for MaskedGraph<'_> {
    fn num_nodes(&self) -> usize {
        self.base.num_nodes
    }

    fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows("spmm", self.base.num_nodes, x)?;
        Ok(csr_spmm(
            &self.base.row_offsets,
            &self.base.col_indices,
            &self.values,
            x,
        ))
    }

    fn spmm_t(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows("spmm_t", self.base.num_nodes, x)?;
        Ok(csr_spmm_t(
            &self.base.row_offsets,
            &self.base.col_indices,
            &self.values,
            x,
        ))
    }

    fn to_dense(&self) -> DenseMatrix {
        let n = self.base.num_nodes;
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for e in self.base.row_range(i) {
                if self.kept[e] {
                    m.set(i, self.base.col_indices[e], self.values[e]);
                }
            }
        }
        m
    }
}

/// Number of neighbors masked for a node with `deg` non-self neighbors.
pub fn masked_count(rate: f64, deg: usize) -> usize {
    ((rate * deg as f64).round().max(0.0) as usize).min(deg)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "mask rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Non-self entry indices of row `i`.
fn neighbor_entries(graph: &SparseGraph, i: usize) -> Vec<usize> {
    graph
        .row_range(i)
        .filter(|&e| graph.col_indices[e] != i)
        .collect()
}

/// For every node, drop `round(rate·deg)` of its incoming neighbor entries,
/// chosen uniformly without replacement, then renormalize.
pub fn mask_random<'a, R: Rng + ?Sized>(
    graph: &'a SparseGraph,
    rate: f64,
    rng: &mut R,
) -> Result<MaskedGraph<'a>> {
    mask_random_scoped(graph, rate, MaskScope::Directed, rng)
}

pub fn mask_random_scoped<'a, R: Rng + ?Sized>(
    graph: &'a SparseGraph,
    rate: f64,
    scope: MaskScope,
    rng: &mut R,
) -> Result<MaskedGraph<'a>> {
    check_rate(rate)?;
    let mut kept = vec![true; graph.nnz()];
    for i in 0..graph.num_nodes {
        let entries = neighbor_entries(graph, i);
        let count = masked_count(rate, entries.len());
        if count == 0 {
            continue;
        }
        for pick in index::sample(rng, entries.len(), count) {
            drop_entry(graph, &mut kept, i, entries[pick], scope);
        }
    }
    MaskedGraph::from_kept(graph, kept)
}

/// For every node, drop the `round(rate·deg)` neighbors nearest in feature
/// space; ties go to the lower node index.
pub fn mask_nearest<'a>(
    graph: &'a SparseGraph,
    features: &DenseMatrix,
    rate: f64,
) -> Result<MaskedGraph<'a>> {
    mask_nearest_scoped(graph, features, rate, MaskScope::Directed)
}

pub fn mask_nearest_scoped<'a>(
    graph: &'a SparseGraph,
    features: &DenseMatrix,
    rate: f64,
    scope: MaskScope,
) -> Result<MaskedGraph<'a>> {
    check_rate(rate)?;
    if features.rows() != graph.num_nodes {
        return Err(Error::shape(
            "mask_nearest",
            format!("{} feature rows", graph.num_nodes),
            features.rows(),
        ));
    }
    let mut kept = vec![true; graph.nnz()];
    for i in 0..graph.num_nodes {
        let entries = neighbor_entries(graph, i);
        let count = masked_count(rate, entries.len());
        if count == 0 {
            continue;
        }
        let xi = features.row(i);
        let mut by_distance: Vec<(f64, usize, usize)> = entries
            .iter()
            .map(|&e| {
                let j = graph.col_indices[e];
                let d2: f64 = xi
                    .iter()
                    .zip(features.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j, e)
            })
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, _, e) in by_distance.iter().take(count) {
            drop_entry(graph, &mut kept, i, e, scope);
        }
    }
    MaskedGraph::from_kept(graph, kept)
}

fn drop_entry(graph: &SparseGraph, kept: &mut [bool], i: usize, e: usize, scope: MaskScope) {
    kept[e] = false;
    if scope == MaskScope::Undirected {
        let j = graph.col_indices[e];
        let range = graph.row_range(j);
        if let Ok(k) = graph.col_indices[range.clone()].binary_search(&i) {
            kept[range.start + k] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn path3() -> SparseGraph {
        build_graph(&[(0, 1), (1, 2)], 3).unwrap()
    }

    fn star(leaves: usize) -> SparseGraph {
        let edges: Vec<_> = (1..=leaves).map(|j| (0, j)).collect();
        normalize(&build_graph(&edges, leaves + 1).unwrap())
    }

    #[test]
    fn build_path_adds_both_directions_and_loops() {
        let g = path3();
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(1), &[0, 1, 2]);
        assert_eq!(g.neighbors(2), &[1, 2]);
        assert!(g.values().iter().all(|&v| v == 1.0));
        g.validate().unwrap();
    }

    #[test]
    fn build_empty_gives_identity() {
        let g = build_graph(&[], 2).unwrap();
        assert_eq!(g.neighbors(0), &[0]);
        assert_eq!(g.neighbors(1), &[1]);
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn build_dedups_reversed_edge() {
        let (g, report) = SparseGraph::from_edges(&[(0, 1), (1, 0)], 2).unwrap();
        assert_eq!(report.duplicate_edges, 1);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.neighbors(0), &[0, 1]);
    }

    #[test]
    fn build_rejects_out_of_range() {
        let err = build_graph(&[(0, 3)], 3).unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { index: 3, .. }));
    }

    #[test]
    fn normalize_triangle_uniform() {
        let g = normalize(&build_graph(&[(0, 1), (1, 2), (0, 2)], 3).unwrap());
        for &v in g.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_isolated_node() {
        let g = normalize(&build_graph(&[], 1).unwrap());
        assert_eq!(g.values(), &[1.0]);
    }

    #[test]
    fn normalize_path_value() {
        let g = normalize(&path3());
        // d̂ = [2, 3, 2]
        let v = g.value(0, 1).unwrap();
        assert!((v - 0.408_248_290_463_863).abs() < 1e-12);
        assert_eq!(g.value(0, 1), g.value(1, 0));
    }

    #[test]
    fn normalize_recomputed_structure_unchanged() {
        let g = normalize(&path3());
        let again = normalize(&g);
        assert_eq!(g, again);
    }

    #[test]
    fn mask_zero_is_identity() {
        let g = star(4);
        let m = mask_random(&g, 0.0, &mut rng::stream(1)).unwrap();
        assert!(m.kept().iter().all(|&k| k));
        assert_eq!(m.values(), g.values());
    }

    #[test]
    fn mask_half_of_four_removes_two() {
        let g = star(4);
        let m = mask_random(&g, 0.5, &mut rng::stream(7)).unwrap();
        assert_eq!(m.removed_in_row(0), 2);
        // leaves have one neighbor; round(0.5) = 1 in Rust (half away from zero)
        for leaf in 1..=4 {
            assert_eq!(m.removed_in_row(leaf), 1);
            assert!(m.is_kept(leaf, leaf));
        }
    }

    #[test]
    fn mask_is_deterministic_per_seed() {
        let g = star(10);
        let a = mask_random(&g, 0.3, &mut rng::stream(99)).unwrap();
        let b = mask_random(&g, 0.3, &mut rng::stream(99)).unwrap();
        assert_eq!(a.kept(), b.kept());
        assert_eq!(a.removed_in_row(0), 3);
    }

    #[test]
    fn masked_values_match_recomputed_degrees() {
        let g = star(6);
        let m = mask_random(&g, 0.5, &mut rng::stream(3)).unwrap();
        for i in 0..g.num_nodes() {
            for &j in g.neighbors(i) {
                if let Some(v) = m.value(i, j) {
                    let expect = 1.0 / ((m.degree(i) * m.degree(j)) as f64).sqrt();
                    assert_eq!(v, expect);
                    if m.is_kept(j, i) {
                        assert_eq!(m.value(j, i), Some(v));
                    }
                }
            }
        }
    }

    #[test]
    fn mask_rejects_bad_rate() {
        let g = star(2);
        assert!(mask_random(&g, 1.0, &mut rng::stream(0)).is_err());
        assert!(mask_random(&g, -0.1, &mut rng::stream(0)).is_err());
    }

    #[test]
    fn undirected_scope_drops_both_directions() {
        let g = star(4);
        let m = mask_random_scoped(&g, 0.5, MaskScope::Undirected, &mut rng::stream(5)).unwrap();
        for i in 0..g.num_nodes() {
            for &j in g.neighbors(i) {
                assert_eq!(m.is_kept(i, j), m.is_kept(j, i));
            }
        }
    }

    #[test]
    fn nearest_removes_closest() {
        // node 0 with neighbors 1..=4 at distances 1,2,3,4 on a line
        let g = star(4);
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]])
            .unwrap();
        let m = mask_nearest(&g, &x, 0.5).unwrap();
        assert!(!m.is_kept(0, 1));
        assert!(!m.is_kept(0, 2));
        assert!(m.is_kept(0, 3));
        assert!(m.is_kept(0, 4));
    }

    #[test]
    fn nearest_breaks_ties_by_index() {
        // node 0 linked to 2 and 5, both at distance 1; one slot
        let g = normalize(&build_graph(&[(0, 5), (0, 2)], 6).unwrap());
        let mut x = DenseMatrix::zeros(6, 1);
        x.set(2, 0, 1.0);
        x.set(5, 0, -1.0);
        let m = mask_nearest(&g, &x, 0.4).unwrap();
        assert!(!m.is_kept(0, 2));
        assert!(m.is_kept(0, 5));
    }

    #[test]
    fn nearest_zero_rate_and_shape_check() {
        let g = star(3);
        let x = DenseMatrix::zeros(4, 2);
        let m = mask_nearest(&g, &x, 0.0).unwrap();
        assert!(m.kept().iter().all(|&k| k));
        assert!(mask_nearest(&g, &DenseMatrix::zeros(3, 2), 0.5).is_err());
    }

    #[test]
    fn masked_transpose_product_matches_dense() {
        let g = star(5);
        let m = mask_random(&g, 0.4, &mut rng::stream(11)).unwrap();
        let x = DenseMatrix::from_fn(6, 2, |i, j| (i as f64) - (j as f64) * 0.5);
        let dense_t = m.to_dense().transpose();
        let expect = dense_t.matmul(&x).unwrap();
        assert!(m.spmm_t(&x).unwrap().max_abs_diff(&expect) < 1e-14);
        let expect = m.to_dense().matmul(&x).unwrap();
        assert!(m.spmm(&x).unwrap().max_abs_diff(&expect) < 1e-14);
    }
}
