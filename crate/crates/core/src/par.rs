//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it, or when the caller passes `parallel = false`, the same closures
//! run in order on the current thread. Each unit of work is independent, so
//! results are identical either way.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::Result;

/// Apply `f` to every column of `b`, collecting the results into a new matrix
/// of shape `(out_rows, b.ncols())`.
pub fn map_columns<F>(b: ArrayView2<'_, f64>, out_rows: usize, parallel: bool, f: F) -> Result<Array2<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let ncols = b.ncols();
    let run = |j: usize| -> Result<Vec<f64>> {
        let col: Vec<f64> = b.column(j).iter().copied().collect();
        f(&col)
    };
    let cols: Vec<Vec<f64>> = if parallel && ncols > 1 {
        collect_par(ncols, run)?
    } else {
        (0..ncols).map(run).collect::<Result<_>>()?
    };
    let mut out = Array2::<f64>::zeros((out_rows, ncols));
    for (j, col) in cols.into_iter().enumerate() {
        debug_assert_eq!(col.len(), out_rows);
        for (dst, v) in out.column_mut(j).iter_mut().zip(col) {
            *dst = v;
        }
    }
    Ok(out)
}

/// Fill the rows of `out` with `f(row_index, row)`.
pub fn fill_rows<F>(out: &mut Array2<f64>, parallel: bool, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let ncols = out.ncols();
    match out.as_slice_mut() {
        Some(data) if ncols > 0 => fill_chunks(data, ncols, parallel, f),
        _ => {
            for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                let mut buf: Vec<f64> = row.to_vec();
                f(i, &mut buf);
                row.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn collect_par<F>(n: usize, run: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(run).collect()
}

#[cfg(not(feature = "parallel"))]
fn collect_par<F>(n: usize, run: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>>,
{
    (0..n).map(run).collect()
}

#[cfg(feature = "parallel")]
fn fill_chunks<F>(data: &mut [f64], ncols: usize, parallel: bool, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        data.par_chunks_mut(ncols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    } else {
        data.chunks_mut(ncols).enumerate().for_each(|(i, row)| f(i, row));
    }
}

#[cfg(not(feature = "parallel"))]
fn fill_chunks<F>(data: &mut [f64], ncols: usize, _parallel: bool, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    data.chunks_mut(ncols).enumerate().for_each(|(i, row)| f(i, row));
}

/// Map `f` over `0..n`, in parallel when available.
pub fn map_indices<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..n).map(f).collect()
}
