//! Stacked diffusion-embedding layers with a softmax head for semi-supervised
//! node classification and an inner-product head for graph auto-encoding.
//!
//! A hidden layer computes `X_k = relu(drop(H(X_{k-1})) W_k)`. The
//! classification head computes `M = softmax(drop(H(X_K)) W_head)` (or without
//! the diffusion when `head_diffusion` is off); the auto-encoder head scores
//! `sigmoid(X_K X_K^T)`. Gradients are exact reverse-mode derivatives, using
//! [`DiffusionOperator::diffuse_transpose`] as the adjoint of each diffusion.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Task};

use ndarray::{Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffusion::DiffusionOperator;
use crate::error::{GdenError, Result};
use crate::graph::Graph;

/// Default cap on `n` for the dense `n x n` auto-encoder output.
pub const DEFAULT_GAE_CAP: usize = 10_000;

/// Projection matrices for every layer.
///
/// `layer_dims = [d_0, d_1, ..., d_last]` gives `layer_dims.len() - 1`
/// matrices, matrix `k` of shape `d_k x d_{k+1}`. For the classification head
/// the last matrix is the head projection; for the auto-encoder every matrix
/// belongs to a propagation layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub seed: u64,
}

impl ModelParams {
    /// Glorot-uniform initialization, deterministic in `seed`.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(GdenError::InvalidParameter(
                "need at least an input and an output dimension".into(),
            ));
        }
        if let Some(pos) = layer_dims.iter().position(|&d| d == 0) {
            return Err(GdenError::InvalidParameter(format!(
                "layer dimension {pos} is zero"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut rng))
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            seed,
        })
    }

    pub fn zeros(layer_dims: &[usize]) -> Self {
        Self {
            layer_dims: layer_dims.to_vec(),
            weights: layer_dims
                .windows(2)
                .map(|w| Array2::zeros((w[0], w[1])))
                .collect(),
            seed: 0,
        }
    }

    pub fn num_matrices(&self) -> usize {
        self.weights.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Check that shapes chain and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() + 1 != self.layer_dims.len() {
            return Err(GdenError::Shape(format!(
                "{} weight matrices for {} layer dims",
                self.weights.len(),
                self.layer_dims.len()
            )));
        }
        for (k, w) in self.weights.iter().enumerate() {
            let want = (self.layer_dims[k], self.layer_dims[k + 1]);
            if w.dim() != want {
                return Err(GdenError::Shape(format!(
                    "weight {k} has shape {:?}, expected {want:?}",
                    w.dim()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(GdenError::NonFinite(format!("weight matrix {k}")));
            }
        }
        Ok(())
    }
}

/// Gradients with the same layout as [`ModelParams::weights`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
}

/// Inverted dropout driven by a caller-owned generator.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn RngCore,
}

impl Dropout<'_> {
    fn mask(&mut self, shape: (usize, usize)) -> Option<Array2<f64>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        let rate = self.rate;
        let rng = &mut *self.rng;
        Some(Array2::from_shape_fn(shape, |_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                keep
            }
        }))
    }
}

fn apply_mask(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Projection input of each layer (after diffusion and dropout), head last.
    pub inputs: Vec<Array2<f64>>,
    pub masks: Vec<Option<Array2<f64>>>,
    /// Hidden-layer pre-activations.
    pub pre_activations: Vec<Array2<f64>>,
    /// Hidden-layer outputs `X_1 .. X_K`.
    pub outputs: Vec<Array2<f64>>,
}

/// A diffusion operator bound to an input feature matrix, with the first
/// diffusion `H(X_0)` computed once.
#[derive(Clone, Debug)]
pub struct Network<'a> {
    op: &'a DiffusionOperator,
    input: Array2<f64>,
    diffused_input: Array2<f64>,
    head_diffusion: bool,
    gae_cap: usize,
}

impl<'a> Network<'a> {
    pub fn new(op: &'a DiffusionOperator, x: ArrayView2<'_, f64>, head_diffusion: bool) -> Result<Self> {
        let diffused_input = op.diffuse(x)?;
        Ok(Self {
            op,
            input: x.to_owned(),
            diffused_input,
            head_diffusion,
            gae_cap: DEFAULT_GAE_CAP,
        })
    }

    pub fn with_gae_cap(mut self, cap: usize) -> Self {
        self.gae_cap = cap;
        self
    }

    pub fn operator(&self) -> &DiffusionOperator {
        self.op
    }

    pub fn n(&self) -> usize {
        self.input.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn head_diffusion(&self) -> bool {
        self.head_diffusion
    }

    fn check_params(&self, params: &ModelParams, min_matrices: usize) -> Result<()> {
        params.validate()?;
        if params.layer_dims[0] != self.input_dim() {
            return Err(GdenError::Shape(format!(
                "input has {} features, model expects {}",
                self.input_dim(),
                params.layer_dims[0]
            )));
        }
        if params.num_matrices() < min_matrices {
            return Err(GdenError::Shape(format!(
                "model needs at least {min_matrices} weight matrices"
            )));
        }
        Ok(())
    }

    /// Propagation layers `0..count`; returns `X_count` and fills the cache.
    fn propagate(
        &self,
        params: &ModelParams,
        count: usize,
        dropout: &mut Option<Dropout<'_>>,
        cache: &mut ForwardCache,
    ) -> Result<Array2<f64>> {
        let mut x = self.input.clone();
        for k in 0..count {
            let diffused = if k == 0 {
                self.diffused_input.clone()
            } else {
                self.op.diffuse(x.view())?
            };
            let mask = dropout.as_mut().and_then(|d| d.mask(diffused.dim()));
            let u = apply_mask(diffused, &mask);
            let pre = u.dot(&params.weights[k]);
            let out = pre.mapv(|v| v.max(0.0));
            if out.iter().any(|v| !v.is_finite()) {
                return Err(GdenError::NonFinite(format!("output of layer {}", k + 1)));
            }
            cache.inputs.push(u);
            cache.masks.push(mask);
            cache.pre_activations.push(pre);
            cache.outputs.push(out.clone());
            x = out;
        }
        Ok(x)
    }

    /// Backpropagate `d_out = dL/dX_count` through layers `count-1 .. 0`.
    fn backpropagate(
        &self,
        params: &ModelParams,
        cache: &ForwardCache,
        count: usize,
        mut d_out: Array2<f64>,
        grads: &mut [Array2<f64>],
    ) -> Result<()> {
        for k in (0..count).rev() {
            let pre = &cache.pre_activations[k];
            let d_pre = ndarray::Zip::from(&d_out)
                .and(pre)
                .map_collect(|&g, &p| if p > 0.0 { g } else { 0.0 });
            grads[k] = cache.inputs[k].t().dot(&d_pre);
            if k > 0 {
                let d_u = d_pre.dot(&params.weights[k].t());
                let d_diffused = apply_mask(d_u, &cache.masks[k]);
                d_out = self.op.diffuse_transpose(d_diffused.view())?;
            }
        }
        Ok(())
    }

    /// Class probabilities `M` (rows sum to one) and the cache for
    /// [`Network::loss_and_grad_semi`].
    pub fn forward_semi(
        &self,
        params: &ModelParams,
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_params(params, 1)?;
        let hidden = params.num_matrices() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(hidden + 1),
            masks: Vec::with_capacity(hidden + 1),
            pre_activations: Vec::with_capacity(hidden),
            outputs: Vec::with_capacity(hidden),
        };
        let xk = self.propagate(params, hidden, &mut dropout, &mut cache)?;
        let head_in = match (self.head_diffusion, hidden) {
            (true, 0) => self.diffused_input.clone(),
            (true, _) => self.op.diffuse(xk.view())?,
            (false, _) => xk,
        };
        let mask = dropout.as_mut().and_then(|d| d.mask(head_in.dim()));
        let v = apply_mask(head_in, &mask);
        let logits = v.dot(&params.weights[hidden]);
        let probs = softmax_rows(&logits);
        if probs.iter().any(|v| !v.is_finite()) {
            return Err(GdenError::NonFinite("classification head output".into()));
        }
        cache.inputs.push(v);
        cache.masks.push(mask);
        Ok((probs, cache))
    }

    /// Cross-entropy summed over `mask` and its exact gradient.
    pub fn loss_and_grad_semi(
        &self,
        params: &ModelParams,
        labels: &[Option<usize>],
        mask: &[usize],
        dropout: Option<Dropout<'_>>,
    ) -> Result<(f64, Gradients)> {
        let classes = *params.layer_dims.last().unwrap_or(&0);
        check_labels(labels, mask, self.n(), classes)?;
        let (probs, cache) = self.forward_semi(params, dropout)?;
        let hidden = params.num_matrices() - 1;

        let mut loss = 0.0;
        let mut d_logits = Array2::<f64>::zeros(probs.dim());
        for &i in mask {
            let y = labels[i].expect("checked");
            loss -= probs[[i, y]].ln();
            for j in 0..classes {
                d_logits[[i, j]] = probs[[i, j]] - if j == y { 1.0 } else { 0.0 };
            }
        }

        let mut grads: Vec<Array2<f64>> = params.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        grads[hidden] = cache.inputs[hidden].t().dot(&d_logits);
        if hidden > 0 {
            let d_v = d_logits.dot(&params.weights[hidden].t());
            let d_head_in = apply_mask(d_v, &cache.masks[hidden]);
            let d_xk = if self.head_diffusion {
                self.op.diffuse_transpose(d_head_in.view())?
            } else {
                d_head_in
            };
            self.backpropagate(params, &cache, hidden, d_xk, &mut grads)?;
        }
        Ok((loss, Gradients { weights: grads }))
    }

    /// Final embedding `X_K` (all matrices treated as propagation layers).
    pub fn embed(&self, params: &ModelParams) -> Result<Array2<f64>> {
        self.check_params(params, 1)?;
        let mut cache = ForwardCache {
            inputs: vec![],
            masks: vec![],
            pre_activations: vec![],
            outputs: vec![],
        };
        self.propagate(params, params.num_matrices(), &mut None, &mut cache)
    }

    /// Hidden embedding `X_K` of a classification model (the head is skipped).
    pub fn hidden_embedding(&self, params: &ModelParams) -> Result<Array2<f64>> {
        self.check_params(params, 1)?;
        let mut cache = ForwardCache {
            inputs: vec![],
            masks: vec![],
            pre_activations: vec![],
            outputs: vec![],
        };
        self.propagate(params, params.num_matrices() - 1, &mut None, &mut cache)
    }

    /// Reconstructed adjacency scores `sigmoid(Z Z^T)` with `Z = X_K`.
    pub fn forward_gae(
        &self,
        params: &ModelParams,
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_params(params, 1)?;
        if self.n() > self.gae_cap {
            return Err(GdenError::TooLarge {
                n: self.n(),
                cap: self.gae_cap,
            });
        }
        let layers = params.num_matrices();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(layers),
            masks: Vec::with_capacity(layers),
            pre_activations: Vec::with_capacity(layers),
            outputs: Vec::with_capacity(layers),
        };
        let z = self.propagate(params, layers, &mut dropout, &mut cache)?;
        Ok((inner_product_scores(z.view()), cache))
    }

    /// `||sigmoid(Z Z^T) - A||_F^2` against the densified `target` and its
    /// exact gradient.
    pub fn loss_and_grad_gae(
        &self,
        params: &ModelParams,
        target: &Graph,
        dropout: Option<Dropout<'_>>,
    ) -> Result<(f64, Gradients)> {
        if target.n() != self.n() {
            return Err(GdenError::Shape(format!(
                "target graph has {} nodes, features have {}",
                target.n(),
                self.n()
            )));
        }
        let (a_hat, cache) = self.forward_gae(params, dropout)?;
        let a = target.to_dense();
        let diff = &a_hat - &a;
        let loss = diff.iter().map(|v| v * v).sum();
        // dL/dS for S = Z Z^T, then dL/dZ = (dS + dS^T) Z
        let d_s = ndarray::Zip::from(&diff)
            .and(&a_hat)
            .map_collect(|&d, &s| 2.0 * d * s * (1.0 - s));
        let z = cache.outputs.last().expect("at least one layer");
        let d_z = (&d_s + &d_s.t()).dot(z);
        let layers = params.num_matrices();
        let mut grads: Vec<Array2<f64>> = params.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        self.backpropagate(params, &cache, layers, d_z, &mut grads)?;
        Ok((loss, Gradients { weights: grads }))
    }
}

/// `sigmoid(Z Z^T)`.
pub fn inner_product_scores(z: ArrayView2<'_, f64>) -> Array2<f64> {
    z.dot(&z.t()).mapv(sigmoid)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn check_labels(labels: &[Option<usize>], mask: &[usize], n: usize, classes: usize) -> Result<()> {
    if mask.is_empty() {
        return Err(GdenError::InvalidParameter("label mask is empty".into()));
    }
    if labels.len() != n {
        return Err(GdenError::Shape(format!(
            "{} labels for {n} nodes",
            labels.len()
        )));
    }
    for &i in mask {
        match labels.get(i) {
            None => {
                return Err(GdenError::InvalidParameter(format!(
                    "masked node {i} out of range"
                )))
            }
            Some(None) => {
                return Err(GdenError::InvalidParameter(format!(
                    "masked node {i} has no label"
                )))
            }
            Some(Some(c)) if *c >= classes => {
                return Err(GdenError::InvalidParameter(format!(
                    "label {c} of node {i} is outside [0, {classes})"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Free-function form of [`Network::forward_semi`] without dropout.
pub fn forward_semi(
    params: &ModelParams,
    op: &DiffusionOperator,
    x: ArrayView2<'_, f64>,
    head_diffusion: bool,
) -> Result<(Array2<f64>, ForwardCache)> {
    Network::new(op, x, head_diffusion)?.forward_semi(params, None)
}

/// Free-function form of [`Network::loss_and_grad_semi`] without dropout.
pub fn loss_and_grad_semi(
    params: &ModelParams,
    op: &DiffusionOperator,
    x: ArrayView2<'_, f64>,
    labels: &[Option<usize>],
    mask: &[usize],
    head_diffusion: bool,
) -> Result<(f64, Gradients)> {
    Network::new(op, x, head_diffusion)?.loss_and_grad_semi(params, labels, mask, None)
}

/// Free-function form of [`Network::forward_gae`] without dropout.
pub fn forward_gae(
    params: &ModelParams,
    op: &DiffusionOperator,
    x: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, ForwardCache)> {
    Network::new(op, x, false)?.forward_gae(params, None)
}

/// Free-function form of [`Network::loss_and_grad_gae`] without dropout.
pub fn loss_and_grad_gae(
    params: &ModelParams,
    op: &DiffusionOperator,
    x: ArrayView2<'_, f64>,
    target: &Graph,
) -> Result<(f64, Gradients)> {
    Network::new(op, x, false)?.loss_and_grad_gae(params, target, None)
}
