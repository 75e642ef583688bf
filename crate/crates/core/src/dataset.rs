//! Plain-text dataset directories.
//!
//! A dataset directory holds:
//!
//! | file | content |
//! |------|---------|
//! | `meta.json` | `{"name": str, "n": int, "d": int, "c": int, "m": int}` |
//! | `edges.tsv` (`m = 1`) or `edges_1.tsv` .. `edges_m.tsv` | `i<TAB>j<TAB>weight`, one line per undirected pair |
//! | `features.tsv` or `features_sparse.tsv` | `n` lines of `d` tab-separated reals, or `row<TAB>col<TAB>value` triples |
//! | `labels.tsv` | `node<TAB>class`; nodes not listed are unlabelled |
//! | `train.idx`, `val.idx`, `test.idx` | one node index per line |
//!
//! All files are UTF-8 with LF line endings. Reals are written in shortest
//! round-trip decimal form, so a write followed by a load reproduces every
//! value bit for bit.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GdenError, Result};
use crate::graph::{FeatureMatrix, Graph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub m: usize,
}

/// Features, labels, one or more graphs over the same nodes, and the
/// train/validation/test index sets.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub features: FeatureMatrix,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetBundle {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn graph(&self) -> &Graph {
        &self.graphs[0]
    }

    pub fn meta(&self) -> Meta {
        Meta {
            name: self.name.clone(),
            n: self.n(),
            d: self.feature_dim(),
            c: self.num_classes,
            m: self.graphs.len(),
        }
    }

    /// Check every structural invariant of the bundle.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.graphs.is_empty() {
            return Err(GdenError::Dataset("no graphs".into()));
        }
        if let Some(g) = self.graphs.iter().find(|g| g.n() != n) {
            return Err(GdenError::Dataset(format!(
                "graph has {} nodes but features have {n} rows",
                g.n()
            )));
        }
        if self.labels.len() != n {
            return Err(GdenError::Dataset(format!(
                "{} labels for {n} nodes",
                self.labels.len()
            )));
        }
        if let Some((i, c)) = self
            .labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&c| c >= self.num_classes).map(|c| (i, c)))
        {
            return Err(GdenError::Dataset(format!(
                "node {i} has label {c}, outside [0, {})",
                self.num_classes
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(GdenError::Dataset("features contain non-finite values".into()));
        }
        let mut seen: HashMap<usize, &str> = HashMap::new();
        for (name, mask) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in mask.iter() {
                if i >= n {
                    return Err(GdenError::Dataset(format!(
                        "{name} index {i} is out of range for {n} nodes"
                    )));
                }
                if let Some(prev) = seen.insert(i, name) {
                    return Err(GdenError::Dataset(format!(
                        "node {i} appears in both {prev} and {name} masks"
                    )));
                }
                if self.labels[i].is_none() {
                    return Err(GdenError::Dataset(format!(
                        "{name} node {i} has no label"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Summary statistics used for validation against known benchmarks.
    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            n: self.n(),
            d: self.feature_dim(),
            c: self.num_classes,
            edges: self.graphs.iter().map(|g| g.num_edges()).collect(),
            isolated: self.graphs.iter().map(|g| g.isolated_nodes().len()).collect(),
            train: self.train.len(),
            val: self.val.len(),
            test: self.test.len(),
            label_rate: self.train.len() as f64 / self.n() as f64,
        }
    }

    /// Scale every feature row to unit L1 norm (zero rows stay zero).
    pub fn row_normalize(&mut self) {
        row_normalize(&mut self.features);
    }
}

pub fn row_normalize(x: &mut FeatureMatrix) {
    for mut row in x.rows_mut() {
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub edges: Vec<usize>,
    pub isolated: Vec<usize>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub label_rate: f64,
}

/// Published size figures of a citation benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkFigures {
    pub name: &'static str,
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub features: usize,
    pub label_rate: f64,
}

pub const CITATION_BENCHMARKS: [BenchmarkFigures; 3] = [
    BenchmarkFigures {
        name: "citeseer",
        nodes: 3327,
        edges: 4732,
        classes: 6,
        features: 3703,
        label_rate: 0.036,
    },
    BenchmarkFigures {
        name: "cora",
        nodes: 2708,
        edges: 5429,
        classes: 7,
        features: 1433,
        label_rate: 0.052,
    },
    BenchmarkFigures {
        name: "pubmed",
        nodes: 19717,
        edges: 44338,
        classes: 3,
        features: 500,
        label_rate: 0.003,
    },
];

pub fn benchmark_figures(name: &str) -> Option<BenchmarkFigures> {
    let lower = name.to_ascii_lowercase();
    CITATION_BENCHMARKS.iter().copied().find(|b| b.name == lower)
}

/// Allowed drift of the symmetrized edge count from the published figure.
pub const EDGE_COUNT_SLACK: usize = 10;

/// Outcome of comparing a loaded dataset with its published figures.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkCheck {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl DatasetStats {
    /// Sizes must match exactly and the label rate within 0.001; an edge-count
    /// drift beyond the slack is only a warning.
    pub fn check_against(&self, fig: &BenchmarkFigures) -> BenchmarkCheck {
        let mut out = BenchmarkCheck::default();
        for (what, got, want) in [
            ("nodes", self.n, fig.nodes),
            ("classes", self.c, fig.classes),
            ("features", self.d, fig.features),
        ] {
            if got != want {
                out.errors.push(format!("{what}: {got} != {want}"));
            }
        }
        if (self.label_rate - fig.label_rate).abs() > 0.001 {
            out.errors.push(format!(
                "label rate {:.4} differs from {:.3}",
                self.label_rate, fig.label_rate
            ));
        }
        let edges = self.edges.first().copied().unwrap_or(0);
        if edges.abs_diff(fig.edges) > EDGE_COUNT_SLACK {
            out.warnings.push(format!(
                "edge count {edges} differs from {} by more than {EDGE_COUNT_SLACK}",
                fig.edges
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    pub row_normalize: bool,
}

fn edge_file_names(m: usize) -> Vec<String> {
    if m == 1 {
        vec!["edges.tsv".to_string()]
    } else {
        (1..=m).map(|v| format!("edges_{v}.tsv")).collect()
    }
}

fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(GdenError::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GdenError {
    GdenError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, s: Option<&str>, what: &str) -> Result<T> {
    let s = s.ok_or_else(|| parse_err(path, line, format!("missing {what}")))?;
    s.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} {s:?}")))
}

fn load_edges(path: &Path, n: usize) -> Result<Graph> {
    let text = read_file(path)?;
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut edges = Vec::new();
    for (ln, line) in lines(&text) {
        let mut it = line.split('\t');
        let i: usize = field(path, ln, it.next(), "source node")?;
        let j: usize = field(path, ln, it.next(), "target node")?;
        let w: f64 = match it.next() {
            Some(s) => field(path, ln, Some(s), "weight")?,
            None => 1.0,
        };
        if it.next().is_some() {
            return Err(parse_err(path, ln, "expected at most 3 fields"));
        }
        if i >= n || j >= n {
            return Err(parse_err(path, ln, format!("node index out of range for n = {n}")));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(parse_err(path, ln, format!("weight {w} must be positive")));
        }
        // duplicate undirected pairs collapse onto the first occurrence
        if seen.insert((i.min(j), i.max(j))) {
            edges.push((i, j, w));
        }
    }
    Graph::from_edges(n, &edges, true)
}

fn load_features(dir: &Path, n: usize, d: usize) -> Result<FeatureMatrix> {
    let dense = dir.join("features.tsv");
    let sparse = dir.join("features_sparse.tsv");
    if dense.exists() {
        let text = read_file(&dense)?;
        let mut x = Array2::zeros((n, d));
        let mut rows = 0;
        for (ln, line) in lines(&text) {
            if rows >= n {
                return Err(parse_err(&dense, ln, format!("more than {n} feature rows")));
            }
            let mut cols = 0;
            for tok in line.split('\t') {
                if cols >= d {
                    return Err(parse_err(&dense, ln, format!("more than {d} values")));
                }
                let v: f64 = field(&dense, ln, Some(tok), "feature value")?;
                if !v.is_finite() {
                    return Err(parse_err(&dense, ln, "non-finite feature value"));
                }
                x[[rows, cols]] = v;
                cols += 1;
            }
            if cols != d {
                return Err(parse_err(&dense, ln, format!("expected {d} values, got {cols}")));
            }
            rows += 1;
        }
        if rows != n {
            return Err(GdenError::Dataset(format!("features.tsv has {rows} rows, expected {n}")));
        }
        Ok(x)
    } else if sparse.exists() {
        let text = read_file(&sparse)?;
        let mut x = Array2::zeros((n, d));
        let mut seen = HashSet::new();
        for (ln, line) in lines(&text) {
            let mut it = line.split('\t');
            let r: usize = field(&sparse, ln, it.next(), "row")?;
            let c: usize = field(&sparse, ln, it.next(), "column")?;
            let v: f64 = field(&sparse, ln, it.next(), "value")?;
            if it.next().is_some() {
                return Err(parse_err(&sparse, ln, "expected 3 fields"));
            }
            if r >= n || c >= d {
                return Err(parse_err(&sparse, ln, format!("entry ({r}, {c}) outside {n} x {d}")));
            }
            if !v.is_finite() {
                return Err(parse_err(&sparse, ln, "non-finite feature value"));
            }
            if !seen.insert((r, c)) {
                return Err(parse_err(&sparse, ln, format!("duplicate entry ({r}, {c})")));
            }
            x[[r, c]] = v;
        }
        Ok(x)
    } else {
        Err(GdenError::MissingFile(dense))
    }
}

fn load_labels(path: &Path, n: usize, c: usize) -> Result<Vec<Option<usize>>> {
    let text = read_file(path)?;
    let mut labels = vec![None; n];
    for (ln, line) in lines(&text) {
        let mut it = line.split('\t');
        let node: usize = field(path, ln, it.next(), "node")?;
        let class: usize = field(path, ln, it.next(), "class")?;
        if it.next().is_some() {
            return Err(parse_err(path, ln, "expected 2 fields"));
        }
        if node >= n {
            return Err(parse_err(path, ln, format!("node {node} out of range for n = {n}")));
        }
        if class >= c {
            return Err(parse_err(path, ln, format!("class {class} outside [0, {c})")));
        }
        if labels[node].replace(class).is_some() {
            return Err(parse_err(path, ln, format!("node {node} labelled twice")));
        }
    }
    Ok(labels)
}

fn load_index(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (ln, line) in lines(&text) {
        let i: usize = field(path, ln, Some(line), "node index")?;
        if i >= n {
            return Err(parse_err(path, ln, format!("index {i} out of range for n = {n}")));
        }
        if !seen.insert(i) {
            return Err(parse_err(path, ln, format!("index {i} repeated")));
        }
        out.push(i);
    }
    Ok(out)
}

/// Load and validate a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    load_dataset_with(dir, LoadOptions::default())
}

pub fn load_dataset_with(dir: &Path, opts: LoadOptions) -> Result<DatasetBundle> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_file(&meta_path)?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    if meta.n == 0 || meta.d == 0 || meta.c == 0 || meta.m == 0 {
        return Err(GdenError::Dataset(format!(
            "meta.json fields n, d, c, m must be positive: {meta:?}"
        )));
    }

    let mut graphs = Vec::with_capacity(meta.m);
    for name in edge_file_names(meta.m) {
        let mut path = dir.join(&name);
        if meta.m == 1 && !path.exists() && dir.join("edges_1.tsv").exists() {
            path = dir.join("edges_1.tsv");
        }
        graphs.push(load_edges(&path, meta.n)?);
    }
    let mut features = load_features(dir, meta.n, meta.d)?;
    if opts.row_normalize {
        row_normalize(&mut features);
    }
    let labels = load_labels(&dir.join("labels.tsv"), meta.n, meta.c)?;
    let bundle = DatasetBundle {
        name: meta.name,
        graphs,
        features,
        labels,
        num_classes: meta.c,
        train: load_index(&dir.join("train.idx"), meta.n)?,
        val: load_index(&dir.join("val.idx"), meta.n)?,
        test: load_index(&dir.join("test.idx"), meta.n)?,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Write `bundle` so that [`load_dataset`] reproduces it exactly.
///
/// Features are written sparse when fewer than a quarter of the entries are
/// nonzero.
pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir)?;
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        Ok(p)
    };

    let meta = serde_json::to_string_pretty(&bundle.meta())
        .map_err(|e| GdenError::Dataset(e.to_string()))?;
    write("meta.json", meta + "\n")?;

    for (g, name) in bundle.graphs.iter().zip(edge_file_names(bundle.graphs.len())) {
        let mut s = String::new();
        for &(i, j, w) in g.edges() {
            let _ = writeln!(s, "{i}\t{j}\t{w}");
        }
        write(&name, s)?;
    }

    let nnz = bundle.features.iter().filter(|&&v| v != 0.0).count();
    let stale = if nnz * 4 < bundle.features.len() {
        let mut s = String::new();
        for ((r, c), v) in bundle.features.indexed_iter() {
            if *v != 0.0 {
                let _ = writeln!(s, "{r}\t{c}\t{v}");
            }
        }
        write("features_sparse.tsv", s)?;
        "features.tsv"
    } else {
        write("features.tsv", features_tsv(&bundle.features))?;
        "features_sparse.tsv"
    };
    let stale = dir.join(stale);
    if stale.exists() {
        fs::remove_file(stale)?;
    }

    let mut s = String::new();
    for (i, l) in bundle.labels.iter().enumerate() {
        if let Some(c) = l {
            let _ = writeln!(s, "{i}\t{c}");
        }
    }
    write("labels.tsv", s)?;

    for (name, idx) in [("train.idx", &bundle.train), ("val.idx", &bundle.val), ("test.idx", &bundle.test)] {
        let mut s = String::new();
        for i in idx.iter() {
            let _ = writeln!(s, "{i}");
        }
        write(name, s)?;
    }
    Ok(())
}

/// Dense `features.tsv` text for a matrix.
pub fn features_tsv(x: &FeatureMatrix) -> String {
    let mut s = String::with_capacity(x.len() * 8);
    for row in x.rows() {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                s.push('\t');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}
