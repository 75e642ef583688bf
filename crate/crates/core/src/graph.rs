//! Sparse symmetric weighted graphs and the raw linear maps built from them.

use ndarray::{Array2, ArrayView2};

use crate::error::{GdenError, Result};
use crate::par;

/// Dense node feature matrix, one row per node.
pub type FeatureMatrix = Array2<f64>;

/// Which raw graph operator to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    /// `L = D - A`
    Laplacian,
    /// `S = D^{-1/2} A D^{-1/2}`
    NormAdjacency,
    /// `P = A D^{-1}` (column-stochastic)
    Transition,
    /// `A`
    Adjacency,
}

/// Immutable undirected weighted graph.
///
/// The adjacency is kept in compressed-row form with both directions present
/// (columns sorted within each row), plus the canonical list of undirected
/// pairs `i <= j` for enumeration and serialization.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    degrees: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
}

impl Graph {
    /// Build a graph from an edge list.
    ///
    /// With `symmetrize` each `(i, j, w)` adds `w` to both `A_ij` and `A_ji`;
    /// duplicates accumulate. Without it the list is read as directed entries
    /// that must already describe a symmetric matrix.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], symmetrize: bool) -> Result<Self> {
        if n == 0 {
            return Err(GdenError::EmptyGraph);
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len() * 2);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(GdenError::EndpointOutOfRange { i, j, n });
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(GdenError::InvalidWeight { i, j, weight: w });
            }
            entries.push((i, j, w));
            if symmetrize && i != j {
                entries.push((j, i, w));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        // merge duplicates in sorted order so sums are order-stable
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += w,
                _ => merged.push((i, j, w)),
            }
        }

        if !symmetrize {
            for &(i, j, w) in &merged {
                let mirror = merged
                    .binary_search_by(|e| (e.0, e.1).cmp(&(j, i)))
                    .map(|k| merged[k].2);
                if mirror != Ok(w) {
                    return Err(GdenError::Asymmetric { i, j });
                }
            }
        }
        Ok(Self::from_sorted_entries(n, merged))
    }

    fn from_sorted_entries(n: usize, merged: Vec<(usize, usize, f64)>) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<usize> = merged.iter().map(|e| e.1).collect();
        let values: Vec<f64> = merged.iter().map(|e| e.2).collect();
        let pairs = merged.iter().copied().filter(|e| e.0 <= e.1).collect();
        let mut g = Self {
            n,
            row_ptr,
            col_idx,
            values,
            degrees: Vec::new(),
            pairs,
        };
        g.degrees = g.recompute_degrees();
        g
    }

    /// Return a copy with `weight` added to `A_ii` for every node, or only for
    /// nodes that currently have zero degree.
    pub fn add_self_loops(&self, weight: f64, only_isolated: bool) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(GdenError::InvalidWeight {
                i: 0,
                j: 0,
                weight,
            });
        }
        let mut entries = Vec::with_capacity(self.values.len() + self.n);
        for i in 0..self.n {
            let mut added = only_isolated && self.degrees[i] > 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let mut w = self.values[k];
                if !added && j >= i {
                    if j == i {
                        w += weight;
                    } else {
                        entries.push((i, i, weight));
                    }
                    added = true;
                }
                entries.push((i, j, w));
            }
            if !added {
                entries.push((i, i, weight));
            }
        }
        Ok(Self::from_sorted_entries(self.n, entries))
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected pairs stored (self-loops count once).
    pub fn num_edges(&self) -> usize {
        self.pairs.len()
    }

    /// Undirected pairs `(i, j, w)` with `i <= j`, sorted.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Row sums of the stored adjacency in ascending column order.
    pub fn recompute_degrees(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    /// Neighbors of `i` with weights, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j) != 0.0
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.degrees[i] == 0.0).collect()
    }

    /// Dense `n x n` adjacency.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                a[[i, j]] = w;
            }
        }
        a
    }

    /// Sum of several graphs on the same node set.
    pub fn sum(graphs: &[Graph]) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| GdenError::InvalidParameter("no graphs given".into()))?;
        let n = first.n;
        if let Some(g) = graphs.iter().find(|g| g.n != n) {
            return Err(GdenError::Shape(format!(
                "graphs have different node counts ({} vs {})",
                n, g.n
            )));
        }
        if graphs.len() == 1 {
            return Ok(first.clone());
        }
        let mut entries = Vec::new();
        for g in graphs {
            for i in 0..n {
                entries.extend(g.row(i).map(|(j, w)| (i, j, w)));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += w,
                _ => merged.push((i, j, w)),
            }
        }
        Ok(Self::from_sorted_entries(n, merged))
    }

    /// Fail with the first zero-degree node, if any.
    pub fn check_positive_degrees(&self) -> Result<()> {
        match self.degrees.iter().position(|&d| d <= 0.0) {
            Some(node) => Err(GdenError::ZeroDegree { node }),
            None => Ok(()),
        }
    }

    /// `y = op x` (or `op^T x`) for a single vector.
    pub fn apply_vec(&self, kind: OperatorKind, transpose: bool, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.apply_row(kind, transpose, i, |j| x[j]);
        }
    }

    #[inline]
    fn apply_row<F: Fn(usize) -> f64>(&self, kind: OperatorKind, transpose: bool, i: usize, x: F) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        let cols = &self.col_idx[r.clone()];
        let vals = &self.values[r];
        match kind {
            OperatorKind::Adjacency => cols.iter().zip(vals).map(|(&j, &w)| w * x(j)).sum(),
            OperatorKind::Laplacian => {
                let ax: f64 = cols.iter().zip(vals).map(|(&j, &w)| w * x(j)).sum();
                self.degrees[i] * x(i) - ax
            }
            OperatorKind::NormAdjacency => {
                let si = self.degrees[i].sqrt();
                let s: f64 = cols
                    .iter()
                    .zip(vals)
                    .map(|(&j, &w)| w * x(j) / self.degrees[j].sqrt())
                    .sum();
                s / si
            }
            OperatorKind::Transition if transpose => {
                let s: f64 = cols.iter().zip(vals).map(|(&j, &w)| w * x(j)).sum();
                s / self.degrees[i]
            }
            OperatorKind::Transition => cols
                .iter()
                .zip(vals)
                .map(|(&j, &w)| w * x(j) / self.degrees[j])
                .sum(),
        }
    }

    /// Apply a raw operator to every column of `m` without densifying it.
    pub fn operator_apply(
        &self,
        kind: OperatorKind,
        m: ArrayView2<'_, f64>,
        transpose: bool,
    ) -> Result<FeatureMatrix> {
        if m.nrows() != self.n {
            return Err(GdenError::Shape(format!(
                "matrix has {} rows, graph has {} nodes",
                m.nrows(),
                self.n
            )));
        }
        if matches!(kind, OperatorKind::NormAdjacency | OperatorKind::Transition) {
            self.check_positive_degrees()?;
        }
        let mut out = Array2::zeros(m.raw_dim());
        let d = m.ncols();
        par::fill_rows(&mut out, self.n * d > 100_000, |i, row| {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.apply_row(kind, transpose, i, |j| m[[j, c]]);
            }
        });
        debug_assert_eq!(out.ncols(), d);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], true).unwrap()
    }

    #[test]
    fn single_edge() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)], true).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 1.0);
        assert_eq!(g.degrees(), &[1.0, 1.0]);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn path_degrees() {
        assert_eq!(path3().degrees(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn duplicates_are_summed() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0), (1, 0, 2.0)], true).unwrap();
        assert_eq!(g.weight(0, 1), 3.0);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Graph::from_edges(0, &[], true), Err(GdenError::EmptyGraph)));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 2, 1.0)], true),
            Err(GdenError::EndpointOutOfRange { .. })
        ));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, 0.0)], true),
            Err(GdenError::InvalidWeight { .. })
        ));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, -1.0)], true),
            Err(GdenError::InvalidWeight { .. })
        ));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, 1.0)], false),
            Err(GdenError::Asymmetric { .. })
        ));
    }

    #[test]
    fn unsymmetrized_symmetric_input_accepted() {
        let g = Graph::from_edges(2, &[(0, 1, 2.0), (1, 0, 2.0)], false).unwrap();
        assert_eq!(g, Graph::from_edges(2, &[(0, 1, 2.0)], true).unwrap());
    }

    #[test]
    fn self_loops_on_isolated_nodes() {
        let g = Graph::from_edges(2, &[], true).unwrap();
        let h = g.add_self_loops(1.0, true).unwrap();
        assert_eq!(h.to_dense(), array![[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(h.degrees(), &[1.0, 1.0]);

        let k2 = Graph::from_edges(2, &[(0, 1, 1.0)], true).unwrap();
        assert_eq!(k2.add_self_loops(1.0, true).unwrap(), k2);
    }

    #[test]
    fn self_loops_everywhere_add_to_degrees() {
        let h = path3().add_self_loops(0.5, false).unwrap();
        assert_eq!(h.degrees(), &[1.5, 2.5, 1.5]);
        assert_eq!(h.weight(1, 1), 0.5);
        // existing loops accumulate
        let h2 = h.add_self_loops(0.5, false).unwrap();
        assert_eq!(h2.weight(1, 1), 1.0);
        assert_eq!(h2.num_edges(), 5);
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = path3();
        let ones = Array2::ones((3, 1));
        let out = g.operator_apply(OperatorKind::Laplacian, ones.view(), false).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transition_preserves_column_mass() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (0, 3, 1.5)], true).unwrap();
        let m = array![[1.0, -2.0], [0.5, 3.0], [2.0, 0.0], [-1.0, 1.0]];
        let out = g.operator_apply(OperatorKind::Transition, m.view(), false).unwrap();
        let before: Array1<f64> = m.sum_axis(ndarray::Axis(0));
        let after: Array1<f64> = out.sum_axis(ndarray::Axis(0));
        for (a, b) in before.iter().zip(after.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_adjacency_on_k2_swaps() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)], true).unwrap();
        let m = array![[1.0], [0.0]];
        let out = g.operator_apply(OperatorKind::NormAdjacency, m.view(), false).unwrap();
        assert_eq!(out, array![[0.0], [1.0]]);
    }

    #[test]
    fn degree_normalized_ops_reject_isolated_nodes() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0)], true).unwrap();
        let m = Array2::ones((3, 1));
        for kind in [OperatorKind::NormAdjacency, OperatorKind::Transition] {
            assert!(matches!(
                g.operator_apply(kind, m.view(), false),
                Err(GdenError::ZeroDegree { node: 2 })
            ));
        }
        assert!(g.operator_apply(OperatorKind::Laplacian, m.view(), false).is_ok());
    }

    #[test]
    fn row_count_mismatch() {
        let m = Array2::ones((2, 1));
        assert!(matches!(
            path3().operator_apply(OperatorKind::Adjacency, m.view(), false),
            Err(GdenError::Shape(_))
        ));
    }

    #[test]
    fn multi_graph_sum() {
        let a = path3();
        let b = Graph::from_edges(3, &[(0, 2, 2.0)], true).unwrap();
        let s = Graph::sum(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.to_dense(), a.to_dense() + b.to_dense());
        assert_eq!(Graph::sum(std::slice::from_ref(&a)).unwrap(), a);
        let c = Graph::from_edges(4, &[], true).unwrap();
        assert!(Graph::sum(&[a, c]).is_err());
    }
}
