//! Closed-form regularized feature diffusion.
//!
//! Every operator is a linear map `Z = c * T_out (M^{-1} (T_in X))` where `M`
//! is a sparse symmetric positive definite system, `c` a scalar prefactor and
//! `T_in`/`T_out` optional diagonal scalings (used by the random-walk kind,
//! whose nonsymmetric system `I - alpha A D^{-1}` is similar to
//! `I - alpha D^{-1/2} A D^{-1/2}`).
//!
//! | kind | paper variant | derived variant |
//! |------|---------------|-----------------|
//! | `LaplacianReg` | `a (I + a L)^{-1} X` | `a (a I + L)^{-1} X` |
//! | `Rwr` | `(1 - a)(I - a P)^{-1} X` | same |
//! | `NormalizedLaplacian` | `a (I - a S)^{-1} X` | `(1 - a)(I - a S)^{-1} X` |
//! | `MultiLaplacian` | `a (I + a sum L_v)^{-1} X` | `a (a I + sum L_v)^{-1} X` |

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{GdenError, Result};
use crate::graph::{FeatureMatrix, Graph, OperatorKind};
use crate::par;
use crate::solver::{conjugate_gradient, DenseLu, SolveMode, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiffusionKind {
    LaplacianReg,
    Rwr,
    NormalizedLaplacian,
    MultiLaplacian,
}

impl DiffusionKind {
    pub const ALL: [DiffusionKind; 4] = [
        DiffusionKind::LaplacianReg,
        DiffusionKind::Rwr,
        DiffusionKind::NormalizedLaplacian,
        DiffusionKind::MultiLaplacian,
    ];

    /// Short name used on the command line and in checkpoints.
    pub fn short_name(self) -> &'static str {
        match self {
            DiffusionKind::LaplacianReg => "l",
            DiffusionKind::Rwr => "rwr",
            DiffusionKind::NormalizedLaplacian => "nl",
            DiffusionKind::MultiLaplacian => "multi-l",
        }
    }

    /// Alphas used for the citation benchmarks.
    pub fn default_alpha(self) -> f64 {
        match self {
            DiffusionKind::LaplacianReg | DiffusionKind::MultiLaplacian => 4.5,
            DiffusionKind::Rwr => 0.91,
            DiffusionKind::NormalizedLaplacian => 0.65,
        }
    }

    /// Whether `alpha` must lie in `(0, 1)` rather than `(0, inf)`.
    pub fn needs_unit_alpha(self) -> bool {
        matches!(self, DiffusionKind::Rwr | DiffusionKind::NormalizedLaplacian)
    }

    pub fn check_alpha(self, alpha: f64) -> Result<()> {
        let ok = if self.needs_unit_alpha() {
            alpha > 0.0 && alpha < 1.0
        } else {
            alpha > 0.0 && alpha.is_finite()
        };
        if ok {
            Ok(())
        } else {
            Err(GdenError::AlphaOutOfRange {
                kind: self.short_name(),
                alpha,
                range: if self.needs_unit_alpha() { "(0, 1)" } else { "(0, inf)" },
            })
        }
    }

    fn uses_degree_normalization(self) -> bool {
        self.needs_unit_alpha()
    }
}

impl fmt::Display for DiffusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for DiffusionKind {
    type Err = GdenError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l" => Ok(DiffusionKind::LaplacianReg),
            "rwr" => Ok(DiffusionKind::Rwr),
            "nl" => Ok(DiffusionKind::NormalizedLaplacian),
            "multi-l" => Ok(DiffusionKind::MultiLaplacian),
            other => Err(GdenError::InvalidParameter(format!(
                "unknown diffusion kind {other:?} (expected l, rwr, nl or multi-l)"
            ))),
        }
    }
}

/// Which closed form to realize.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// The closed forms as printed.
    #[default]
    Paper,
    /// The exact minimizers of the corresponding regularized objectives.
    Derived,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Paper => "paper",
            Variant::Derived => "derived",
        }
    }
}

impl FromStr for Variant {
    type Err = GdenError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Variant::Paper),
            "derived" => Ok(Variant::Derived),
            other => Err(GdenError::InvalidParameter(format!(
                "unknown variant {other:?} (expected paper or derived)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
enum System {
    /// `shift * I + scale * L`
    Laplacian { shift: f64, scale: f64 },
    /// `I - alpha * S`
    NormAdjacency { alpha: f64 },
}

/// A configured diffusion map `Z = H_d(A, X)`.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    kind: DiffusionKind,
    alpha: f64,
    variant: Variant,
    cfg: SolverConfig,
    graphs: Vec<Graph>,
    system_graph: Graph,
    system: System,
    prefactor: f64,
    /// `D^{1/2}` and `D^{-1/2}` diagonals, random-walk kind only.
    sqrt_deg: Option<(Vec<f64>, Vec<f64>)>,
    inv_diag: Vec<f64>,
    dense: Option<DenseLu>,
}

impl DiffusionOperator {
    /// Validate parameters and precompute everything needed for repeated
    /// application.
    pub fn new(
        kind: DiffusionKind,
        graphs: Vec<Graph>,
        alpha: f64,
        variant: Variant,
        cfg: SolverConfig,
    ) -> Result<Self> {
        kind.check_alpha(alpha)?;
        let first = graphs
            .first()
            .ok_or_else(|| GdenError::InvalidParameter("at least one graph is required".into()))?;
        let n = first.n();
        cfg.validate(n)?;
        if kind != DiffusionKind::MultiLaplacian && graphs.len() != 1 {
            return Err(GdenError::InvalidParameter(format!(
                "{kind} diffusion takes exactly one graph, got {}",
                graphs.len()
            )));
        }
        let system_graph = Graph::sum(&graphs)?;
        if kind.uses_degree_normalization() {
            system_graph.check_positive_degrees()?;
        }

        let (system, prefactor) = match (kind, variant) {
            (DiffusionKind::LaplacianReg | DiffusionKind::MultiLaplacian, Variant::Paper) => {
                (System::Laplacian { shift: 1.0, scale: alpha }, alpha)
            }
            (DiffusionKind::LaplacianReg | DiffusionKind::MultiLaplacian, Variant::Derived) => {
                (System::Laplacian { shift: alpha, scale: 1.0 }, alpha)
            }
            (DiffusionKind::NormalizedLaplacian, Variant::Paper) => {
                (System::NormAdjacency { alpha }, alpha)
            }
            (DiffusionKind::NormalizedLaplacian, Variant::Derived) | (DiffusionKind::Rwr, _) => {
                (System::NormAdjacency { alpha }, 1.0 - alpha)
            }
        };

        let sqrt_deg = (kind == DiffusionKind::Rwr).then(|| {
            let sd: Vec<f64> = system_graph.degrees().iter().map(|d| d.sqrt()).collect();
            let inv = sd.iter().map(|s| 1.0 / s).collect();
            (sd, inv)
        });

        let deg = system_graph.degrees();
        let inv_diag = (0..n)
            .map(|i| {
                let aii = system_graph.weight(i, i);
                let diag = match system {
                    System::Laplacian { shift, scale } => shift + scale * (deg[i] - aii),
                    System::NormAdjacency { alpha } => 1.0 - alpha * aii / deg[i],
                };
                1.0 / diag
            })
            .collect();

        let mut op = Self {
            kind,
            alpha,
            variant,
            cfg,
            graphs,
            system_graph,
            system,
            prefactor,
            sqrt_deg,
            inv_diag,
            dense: None,
        };
        if op.cfg.mode == SolveMode::Dense {
            let m = crate::solver::materialize(&|x: &[f64], y: &mut [f64]| op.apply_system(x, y), n);
            op.dense = Some(DenseLu::factor(m)?);
        }
        Ok(op)
    }

    pub fn kind(&self) -> DiffusionKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.system_graph.n()
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn solver_config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Scalar in front of the inverse.
    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// `y = M x` for the internal SPD system.
    pub fn apply_system(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.system_graph;
        match self.system {
            System::Laplacian { shift, scale } => {
                g.apply_vec(OperatorKind::Laplacian, false, x, y);
                for (yi, xi) in y.iter_mut().zip(x) {
                    *yi = shift * xi + scale * *yi;
                }
            }
            System::NormAdjacency { alpha } => {
                g.apply_vec(OperatorKind::NormAdjacency, false, x, y);
                for (yi, xi) in y.iter_mut().zip(x) {
                    *yi = xi - alpha * *yi;
                }
            }
        }
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.nrows() != self.n() {
            return Err(GdenError::Shape(format!(
                "input has {} rows, operator expects {}",
                x.nrows(),
                self.n()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(GdenError::NonFinite(format!(
                "diffusion input entry ({}, {})",
                pos / x.ncols().max(1),
                pos % x.ncols().max(1)
            )));
        }
        Ok(())
    }

    fn solve_system(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if let Some(lu) = &self.dense {
            return lu.solve(b, self.cfg.parallel);
        }
        let apply = |x: &[f64], y: &mut [f64]| self.apply_system(x, y);
        par::map_columns(b, self.n(), self.cfg.parallel, |col| {
            conjugate_gradient(&apply, Some(&self.inv_diag), col, &self.cfg)
        })
    }

    fn run(&self, x: ArrayView2<'_, f64>, transpose: bool) -> Result<FeatureMatrix> {
        self.check_input(x)?;
        let mut z = match &self.sqrt_deg {
            None => self.solve_system(x)?,
            Some((sd, inv_sd)) => {
                // forward: D^{1/2} M^{-1} D^{-1/2};  transpose: D^{-1/2} M^{-1} D^{1/2}
                let (pre, post) = if transpose { (sd, inv_sd) } else { (inv_sd, sd) };
                let mut b = x.to_owned();
                scale_rows(&mut b, pre);
                let mut y = self.solve_system(b.view())?;
                scale_rows(&mut y, post);
                y
            }
        };
        z.mapv_inplace(|v| self.prefactor * v);
        Ok(z)
    }

    /// `Z = H X`.
    pub fn diffuse(&self, x: ArrayView2<'_, f64>) -> Result<FeatureMatrix> {
        self.run(x, false)
    }

    /// `H^T G`, the adjoint used when backpropagating through a diffusion.
    pub fn diffuse_transpose(&self, g: ArrayView2<'_, f64>) -> Result<FeatureMatrix> {
        self.run(g, true)
    }
}

fn scale_rows(m: &mut Array2<f64>, diag: &[f64]) {
    for (mut row, &d) in m.axis_iter_mut(Axis(0)).zip(diag) {
        row.mapv_inplace(|v| v * d);
    }
}

/// Convenience wrapper over [`DiffusionOperator::new`].
pub fn make_diffusion(
    kind: DiffusionKind,
    graphs: Vec<Graph>,
    alpha: f64,
    variant: Variant,
    cfg: SolverConfig,
) -> Result<DiffusionOperator> {
    DiffusionOperator::new(kind, graphs, alpha, variant, cfg)
}
