//! On-disk dataset bundles.
//!
//! A dataset directory holds:
//!
//! - `meta.json`: `{"name", "num_nodes", "num_features", "num_classes"}`
//! - `edges.tsv`: one `src<TAB>dst` line per undirected edge, 0-based
//! - `features.csv`: `N` rows of `d` comma-separated decimals
//! - `labels.csv`: `N` lines, one class id each
//! - `splits.json`: `{"train": [..], "val": [..], "test": [..]}`
//!
//! All files are UTF-8 text with LF line endings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{build_graph, SparseGraph};
use crate::noise::LabelSet;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Indices in both train and val.
    pub fn labeled(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.train.iter().chain(&self.val).copied().collect();
        out.sort_unstable();
        out
    }

    /// Every node outside the training split, in ascending order.
    pub fn non_train(&self, num_nodes: usize) -> Vec<usize> {
        let mut in_train = vec![false; num_nodes];
        for &i in &self.train {
            in_train[i] = true;
        }
        (0..num_nodes).filter(|&i| !in_train[i]).collect()
    }

    /// Collects every violated invariant (range, disjointness).
    pub fn problems(&self, num_nodes: usize) -> Vec<String> {
        let mut problems = Vec::new();
        let mut owner: Vec<Option<&'static str>> = vec![None; num_nodes];
        for (name, list) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            for &i in list {
                if i >= num_nodes {
                    problems.push(format!("{name} split index {i} >= num_nodes {num_nodes}"));
                    continue;
                }
                match owner[i] {
                    Some(prev) if prev == name => {
                        problems.push(format!("node {i} listed twice in {name} split"))
                    }
                    Some(prev) => {
                        problems.push(format!("node {i} appears in both {prev} and {name} splits"))
                    }
                    None => owner[i] = Some(name),
                }
            }
        }
        problems
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let problems = self.problems(num_nodes);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidDataset(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// Unnormalized `A + I`.
    pub graph: SparseGraph,
    pub features: DenseMatrix,
    pub clean_labels: LabelSet,
    pub splits: Splits,
    pub meta: DatasetMeta,
}

impl DatasetBundle {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let n = self.meta.num_nodes;
        if self.meta.num_classes < 2 {
            problems.push(format!(
                "num_classes must be >= 2, got {}",
                self.meta.num_classes
            ));
        }
        if self.graph.num_nodes() != n {
            problems.push(format!(
                "graph has {} nodes, meta says {n}",
                self.graph.num_nodes()
            ));
        }
        if self.features.shape() != (n, self.meta.num_features) {
            problems.push(format!(
                "features are {:?}, meta says ({n}, {})",
                self.features.shape(),
                self.meta.num_features
            ));
        }
        if !self.features.is_finite() {
            problems.push("features contain non-finite values".into());
        }
        if self.clean_labels.len() != n {
            problems.push(format!("{} labels for {n} nodes", self.clean_labels.len()));
        }
        if let Err(Error::InvalidDataset(p)) = self.clean_labels.validate(self.meta.num_classes) {
            problems.extend(p);
        }
        problems.extend(self.splits.problems(n));
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidDataset(problems))
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    write_text(path, &(text + "\n"))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Content lines with their 1-based line numbers; blank lines are skipped.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    lines(&text)
        .map(|(no, line)| {
            let mut parts = line.split('\t');
            let mut next = |what: &str| -> Result<usize> {
                parts
                    .next()
                    .ok_or_else(|| parse_err(path, no, format!("missing {what}")))?
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(path, no, format!("bad {what}: {e}")))
            };
            let src = next("src")?;
            let dst = next("dst")?;
            Ok((src, dst))
        })
        .collect()
}

pub fn write_edges(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut out = String::with_capacity(edges.len() * 12);
    for (a, b) in edges {
        let _ = writeln!(out, "{a}\t{b}");
    }
    write_text(path, &out)
}

pub fn read_features(path: &Path) -> Result<DenseMatrix> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (no, line) in lines(&text) {
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, no, format!("bad feature value {v:?}: {e}")))
            })
            .collect();
        rows.push(row?);
    }
    DenseMatrix::from_rows(&rows)
}

pub fn write_features(path: &Path, features: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for row in features.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // `{}` on f64 prints the shortest string that round-trips exactly.
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads one class id per line; `-1` marks an unlabeled node.
pub fn read_label_column(path: &Path, num_classes: Option<usize>) -> Result<Vec<Option<usize>>> {
    let text = read_text(path)?;
    lines(&text)
        .map(|(no, line)| {
            let v: i64 = line
                .parse()
                .map_err(|e| parse_err(path, no, format!("bad class id {line:?}: {e}")))?;
            if v == -1 {
                return Ok(None);
            }
            if v < 0 {
                return Err(parse_err(path, no, format!("negative class id {v}")));
            }
            let c = v as usize;
            if let Some(limit) = num_classes {
                if c >= limit {
                    return Err(parse_err(
                        path,
                        no,
                        format!("class id {c} out of range for {limit} classes"),
                    ));
                }
            }
            Ok(Some(c))
        })
        .collect()
}

pub fn write_label_column(path: &Path, labels: &[Option<usize>]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        match l {
            Some(c) => {
                let _ = writeln!(out, "{c}");
            }
            None => out.push_str("-1\n"),
        }
    }
    write_text(path, &out)
}

fn file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let required = [
        "meta.json",
        "edges.tsv",
        "features.csv",
        "labels.csv",
        "splits.json",
    ];
    let missing: Vec<String> = required
        .iter()
        .filter(|f| !file(dir, f).is_file())
        .map(|f| format!("missing file {}", file(dir, f).display()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidDataset(missing));
    }
    let meta: DatasetMeta = read_json(&file(dir, "meta.json"))?;
    let edges = read_edges(&file(dir, "edges.tsv"))?;
    let features = read_features(&file(dir, "features.csv"))?;
    let labels = read_label_column(&file(dir, "labels.csv"), Some(meta.num_classes))?;
    let splits: Splits = read_json(&file(dir, "splits.json"))?;

    let mut problems = Vec::new();
    for (k, &(a, b)) in edges.iter().enumerate() {
        for v in [a, b] {
            if v >= meta.num_nodes {
                problems.push(format!(
                    "edges.tsv line {}: node {v} >= num_nodes {}",
                    k + 1,
                    meta.num_nodes
                ));
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::InvalidDataset(problems));
    }
    if labels.iter().any(Option::is_none) {
        return Err(Error::InvalidDataset(vec![
            "labels.csv must give a class for every node".into(),
        ]));
    }
    let bundle = DatasetBundle {
        graph: build_graph(&edges, meta.num_nodes)?,
        features,
        clean_labels: LabelSet::clean(labels),
        splits,
        meta,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&file(dir, "meta.json"), &bundle.meta)?;
    write_edges(&file(dir, "edges.tsv"), &bundle.graph.undirected_edges())?;
    write_features(&file(dir, "features.csv"), &bundle.features)?;
    write_label_column(&file(dir, "labels.csv"), &bundle.clean_labels.labels)?;
    write_json(&file(dir, "splits.json"), &bundle.splits)
}
