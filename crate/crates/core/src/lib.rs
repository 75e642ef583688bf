//! Graph diffusion-embedding networks.
//!
//! Regularized feature diffusion on sparse graphs ([`diffusion`]), stacked
//! diffusion-embedding layers with a softmax classification head or an
//! inner-product graph auto-encoder head ([`model`]), and the training,
//! evaluation and dataset plumbing around them.

pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod model;
pub mod par;
pub mod solver;
pub mod synthetic;
pub mod train;

pub use diffusion::{make_diffusion, DiffusionKind, DiffusionOperator, Variant};
pub use error::{GdenError, Result};
pub use graph::{FeatureMatrix, Graph, OperatorKind};
pub use solver::{solve_linear, SolveMode, SolverConfig};
