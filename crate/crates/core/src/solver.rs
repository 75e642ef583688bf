//! Iterative and dense solvers for the linear systems behind every diffusion.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{GdenError, Result};
use crate::par;

/// How a system is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Iterative,
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative residual threshold, per right-hand-side column.
    pub tolerance: f64,
    /// Iteration cap; `None` means `10 * n`.
    pub max_iterations: Option<usize>,
    pub mode: SolveMode,
    /// Largest `n` for which dense mode is allowed.
    pub dense_cap: usize,
    /// Solve right-hand-side columns concurrently (only with the `parallel` feature).
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iterations: None,
            mode: SolveMode::Iterative,
            dense_cap: 2000,
            parallel: true,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn dense() -> Self {
        Self {
            mode: SolveMode::Dense,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(GdenError::InvalidParameter(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(GdenError::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.mode == SolveMode::Dense && n > self.dense_cap {
            return Err(GdenError::TooLarge {
                n,
                cap: self.dense_cap,
            });
        }
        Ok(())
    }

    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n.max(1))
    }
}

/// A linear map applied to one vector: `apply(x, y)` writes `y = M x`.
pub type LinearMap<'a> = &'a (dyn Fn(&[f64], &mut [f64]) + Sync);

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `M X = B` column by column.
///
/// `spd = true` uses conjugate gradients; otherwise BiCGSTAB, falling back to
/// CG on the normal equations (which needs `apply_transpose`) on breakdown.
/// In dense mode the map is materialized and LU-factorized.
pub fn solve_linear(
    apply: LinearMap<'_>,
    apply_transpose: LinearMap<'_>,
    b: ArrayView2<'_, f64>,
    spd: bool,
    cfg: &SolverConfig,
) -> Result<Array2<f64>> {
    let n = b.nrows();
    cfg.validate(n)?;
    if cfg.mode == SolveMode::Dense {
        let lu = DenseLu::factor(materialize(apply, n))?;
        return lu.solve(b, cfg.parallel);
    }
    par::map_columns(b, n, cfg.parallel, |col| {
        if spd {
            conjugate_gradient(apply, None, col, cfg)
        } else {
            match bicgstab(apply, col, cfg) {
                Ok(x) => Ok(x),
                Err(GdenError::NotConverged { .. }) | Err(GdenError::SolverNaN { .. }) => {
                    normal_equations_cg(apply, apply_transpose, col, cfg)
                }
                Err(e) => Err(e),
            }
        }
    })
}

/// Dense `n x n` matrix of a linear map, built column by column.
pub fn materialize(apply: LinearMap<'_>, n: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n, n));
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        apply(&e, &mut y);
        e[j] = 0.0;
        for (i, &v) in y.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

/// Preconditioned conjugate gradients for one right-hand side.
///
/// `inv_diag` is an optional Jacobi preconditioner (reciprocal diagonal).
pub fn conjugate_gradient(
    apply: LinearMap<'_>,
    inv_diag: Option<&[f64]>,
    b: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let target = cfg.tolerance * bnorm;
    let precondition = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };

    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let cap = cfg.iteration_cap(n);

    for it in 0..cap {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(GdenError::SolverNaN { iteration: it });
        }
        if pap <= 0.0 {
            // not positive definite along p, or exact convergence
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rnorm = norm(&r);
        if rnorm.is_nan() {
            return Err(GdenError::SolverNaN { iteration: it });
        }
        if rnorm <= target {
            return Ok(x);
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = true_residual(apply, &x, b) / bnorm;
    if residual <= cfg.tolerance {
        return Ok(x);
    }
    Err(GdenError::NotConverged {
        iterations: cap,
        residual,
    })
}

fn true_residual(apply: LinearMap<'_>, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; x.len()];
    apply(x, &mut ax);
    ax.iter()
        .zip(b)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// BiCGSTAB for a general nonsingular map.
pub fn bicgstab(apply: LinearMap<'_>, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let target = cfg.tolerance * bnorm;
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let cap = cfg.iteration_cap(n);

    for it in 0..cap {
        let rho_next = dot(&r_hat, &r);
        if rho_next == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok(x);
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        let rnorm = norm(&r);
        if rnorm.is_nan() {
            return Err(GdenError::SolverNaN { iteration: it });
        }
        if rnorm <= target {
            return Ok(x);
        }
    }
    let residual = true_residual(apply, &x, b) / bnorm;
    if residual <= cfg.tolerance {
        return Ok(x);
    }
    Err(GdenError::NotConverged {
        iterations: cap,
        residual,
    })
}

/// CG on `M^T M x = M^T b`, checked against the residual of `M x = b`.
fn normal_equations_cg(
    apply: LinearMap<'_>,
    apply_transpose: LinearMap<'_>,
    b: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let normal = |x: &[f64], y: &mut [f64]| {
        let mut tmp = vec![0.0; x.len()];
        apply(x, &mut tmp);
        apply_transpose(&tmp, y);
    };
    let mut rhs = vec![0.0; n];
    apply_transpose(b, &mut rhs);
    // the normal-equation residual understates the true one, so aim lower
    let inner = SolverConfig {
        tolerance: cfg.tolerance * 1e-2,
        ..cfg.clone()
    };
    let x = match conjugate_gradient(&normal, None, &rhs, &inner) {
        Ok(x) => x,
        Err(e) => return Err(e),
    };
    let residual = true_residual(apply, &x, b) / bnorm;
    if residual <= cfg.tolerance {
        Ok(x)
    } else {
        Err(GdenError::NotConverged {
            iterations: cfg.iteration_cap(n),
            residual,
        })
    }
}

/// LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct DenseLu {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(mut a: Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(GdenError::Shape("LU needs a square matrix".into()));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, a[[i, k]].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(pmax > 0.0) || !pmax.is_finite() {
                return Err(GdenError::NonFinite(format!("singular matrix at column {k}")));
            }
            if piv != k {
                for j in 0..n {
                    a.swap([k, j], [piv, j]);
                }
                perm.swap(k, piv);
            }
            let pivot = a[[k, k]];
            for i in k + 1..n {
                let f = a[[i, k]] / pivot;
                a[[i, k]] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[[i, j]] -= f * a[[k, j]];
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn n(&self) -> usize {
        self.lu.nrows()
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }

    pub fn solve(&self, b: ArrayView2<'_, f64>, parallel: bool) -> Result<Array2<f64>> {
        if b.nrows() != self.n() {
            return Err(GdenError::Shape(format!(
                "right-hand side has {} rows, system has {}",
                b.nrows(),
                self.n()
            )));
        }
        par::map_columns(b, self.n(), parallel, |col| Ok(self.solve_vec(col)))
    }
}
