//! Adam training loops with early stopping, evaluation metrics, and
//! edge splits for link prediction.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetBundle;
use crate::diffusion::DiffusionOperator;
use crate::error::{GdenError, Result};
use crate::graph::Graph;
use crate::model::{Dropout, Gradients, ModelParams, Network};

/// Stream offset separating the dropout generator from weight initialization.
const DROPOUT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty added to the gradient of the first weight matrix.
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Stop after this many epochs without a new best validation metric.
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            patience: 10,
            dropout: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for the auto-encoder: no dropout, no weight decay.
    pub fn gae() -> Self {
        Self {
            dropout: 0.0,
            weight_decay: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(GdenError::InvalidParameter(msg.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be a finite non-negative number");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

/// Hidden widths and head options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub head_diffusion: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            head_diffusion: true,
        }
    }
}

impl Architecture {
    /// `[d, hidden.., out]`.
    pub fn layer_dims(&self, input_dim: usize, output_dim: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend(&self.hidden);
        dims.push(output_dim);
        dims
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Index into `records` of the epoch whose parameters were returned.
    pub best_epoch: usize,
    pub test_metric: Option<f64>,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.get(self.best_epoch)
    }

    /// One JSON object per line: `{"epoch":..,"train_loss":..,"val_loss":..,"val_metric":..}`.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(s, "{}", serde_json::to_string(r).expect("plain record"));
        }
        s
    }

    pub fn write_metrics(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
        let text = fs::read_to_string(path)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| GdenError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })
            })
            .collect()
    }
}

/// First and second moment estimates for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub t: i32,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Array2<f64>> = params.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is added to the gradient of
/// the first matrix only.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, config: &TrainConfig) {
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t);
    let c2 = 1.0 - b2.powi(state.t);
    for (k, ((w, g), (m, v))) in params
        .weights
        .iter_mut()
        .zip(&grads.weights)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .enumerate()
    {
        let decay = if k == 0 { config.weight_decay } else { 0.0 };
        ndarray::Zip::from(w)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                let g = g + decay * *w;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
            });
    }
}

/// Fraction of `mask` whose arg-max class equals the label; ties go to the
/// lowest class index.
pub fn evaluate_accuracy(probs: &Array2<f64>, labels: &[Option<usize>], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(GdenError::InvalidParameter("accuracy mask is empty".into()));
    }
    let mut correct = 0usize;
    for &i in mask {
        let row = probs.row(i);
        let pred = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
            .0;
        let label = labels
            .get(i)
            .copied()
            .flatten()
            .ok_or_else(|| GdenError::InvalidParameter(format!("node {i} has no label")))?;
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / mask.len() as f64)
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(GdenError::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(GdenError::InvalidParameter("AUC needs both positive and negative examples".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GdenError::NonFinite("AUC score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // mid-ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + end + 1) as f64 / 2.0;
        rank_sum_pos += order[start..end].iter().filter(|&&i| labels[i]).count() as f64 * mid_rank;
        start = end;
    }
    let pos = pos as f64;
    let neg = neg as f64;
    Ok((rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Positive and negative node pairs for link prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSplit {
    pub n: usize,
    pub train_edges: Vec<(usize, usize, f64)>,
    pub val_edges: Vec<(usize, usize, f64)>,
    pub test_edges: Vec<(usize, usize, f64)>,
    pub val_nonedges: Vec<(usize, usize)>,
    pub test_nonedges: Vec<(usize, usize)>,
}

impl EdgeSplit {
    /// Graph over the training positives only.
    pub fn train_graph(&self) -> Result<Graph> {
        Graph::from_edges(self.n, &self.train_edges, true)
    }

    fn scored_pairs<'a>(
        pos: &'a [(usize, usize, f64)],
        neg: &'a [(usize, usize)],
    ) -> (Vec<(usize, usize)>, Vec<bool>) {
        let pairs = pos.iter().map(|e| (e.0, e.1)).chain(neg.iter().copied()).collect();
        let labels = std::iter::repeat(true)
            .take(pos.len())
            .chain(std::iter::repeat(false).take(neg.len()))
            .collect();
        (pairs, labels)
    }

    pub fn val_pairs(&self) -> (Vec<(usize, usize)>, Vec<bool>) {
        Self::scored_pairs(&self.val_edges, &self.val_nonedges)
    }

    pub fn test_pairs(&self) -> (Vec<(usize, usize)>, Vec<bool>) {
        Self::scored_pairs(&self.test_edges, &self.test_nonedges)
    }
}

pub const MIN_SPLIT_EDGES: usize = 10;

/// Uniformly split the undirected non-loop edges of `g` and sample as many
/// non-adjacent pairs for the validation and test sets.
pub fn split_edges(g: &Graph, val_frac: f64, test_frac: f64, seed: u64) -> Result<EdgeSplit> {
    if !(val_frac >= 0.0 && test_frac >= 0.0 && val_frac + test_frac < 1.0) {
        return Err(GdenError::InvalidParameter(format!(
            "edge split fractions {val_frac} + {test_frac} must be non-negative and sum below 1"
        )));
    }
    let mut edges: Vec<(usize, usize, f64)> = g.edges().iter().copied().filter(|e| e.0 != e.1).collect();
    if edges.len() < MIN_SPLIT_EDGES {
        return Err(GdenError::InvalidParameter(format!(
            "graph has {} edges, at least {MIN_SPLIT_EDGES} are needed for a split",
            edges.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let n_val = (edges.len() as f64 * val_frac).floor() as usize;
    let n_test = (edges.len() as f64 * test_frac).floor() as usize;
    let val_edges = edges[..n_val].to_vec();
    let test_edges = edges[n_val..n_val + n_test].to_vec();
    let train_edges = edges[n_val + n_test..].to_vec();

    let n = g.n();
    let needed = n_val + n_test;
    let non_edges_available = (n * (n - 1) / 2).saturating_sub(edges.len());
    if needed > non_edges_available {
        return Err(GdenError::InvalidParameter(format!(
            "graph is too dense: {needed} negative pairs requested, {non_edges_available} exist"
        )));
    }
    let mut chosen: HashSet<(usize, usize)> = HashSet::with_capacity(needed);
    let mut negatives = Vec::with_capacity(needed);
    let max_attempts = 100 * needed + 1000;
    let mut attempts = 0;
    while negatives.len() < needed {
        attempts += 1;
        if attempts > max_attempts {
            return Err(GdenError::InvalidParameter(format!(
                "negative sampling failed after {max_attempts} attempts"
            )));
        }
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j || g.has_edge(i, j) {
            continue;
        }
        let key = (i.min(j), i.max(j));
        if chosen.insert(key) {
            negatives.push(key);
        }
    }
    let test_nonedges = negatives.split_off(n_val);
    Ok(EdgeSplit {
        n,
        train_edges,
        val_edges,
        test_edges,
        val_nonedges: negatives,
        test_nonedges,
    })
}

fn dropout_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM)
}

/// Mean cross-entropy over `mask` for precomputed probabilities.
fn mean_cross_entropy(probs: &Array2<f64>, labels: &[Option<usize>], mask: &[usize]) -> f64 {
    let total: f64 = mask
        .iter()
        .map(|&i| -probs[[i, labels[i].expect("validated")]].ln())
        .sum();
    total / mask.len() as f64
}

fn scale_grads(grads: &mut Gradients, s: f64) {
    for g in &mut grads.weights {
        g.mapv_inplace(|v| v * s);
    }
}

/// Early-stopping bookkeeping shared by both training loops.
struct BestTracker {
    params: ModelParams,
    metric: f64,
    epoch: usize,
    since: usize,
}

impl BestTracker {
    fn new(params: &ModelParams) -> Self {
        Self {
            params: params.clone(),
            metric: f64::NEG_INFINITY,
            epoch: 0,
            since: 0,
        }
    }

    /// Record `metric` for `params`; returns true when training should stop.
    fn observe(&mut self, epoch: usize, metric: f64, params: &ModelParams, patience: usize) -> bool {
        if metric > self.metric {
            self.metric = metric;
            self.epoch = epoch;
            self.params = params.clone();
            self.since = 0;
            false
        } else {
            self.since += 1;
            self.since >= patience
        }
    }
}

/// Train the semi-supervised classifier on `bundle.train`, selecting the epoch
/// with the best validation accuracy.
///
/// The training objective is the mean cross-entropy over the labelled nodes;
/// the recorded `val_loss` is the mean over the validation nodes.
pub fn train_semi(
    bundle: &DatasetBundle,
    op: &DiffusionOperator,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    bundle.validate()?;
    if bundle.train.is_empty() || bundle.val.is_empty() {
        return Err(GdenError::InvalidParameter("train and validation masks must be non-empty".into()));
    }
    let net = Network::new(op, bundle.features.view(), arch.head_diffusion)?;
    let dims = arch.layer_dims(bundle.feature_dim(), bundle.num_classes);
    let mut params = ModelParams::init(&dims, config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut rng = dropout_rng(config.seed);
    let mut best = BestTracker::new(&params);
    let mut history = TrainHistory::default();
    let inv_l = 1.0 / bundle.train.len() as f64;

    for epoch in 0..config.epochs {
        let dropout = (config.dropout > 0.0).then(|| Dropout {
            rate: config.dropout,
            rng: &mut rng,
        });
        let (loss, mut grads) = net.loss_and_grad_semi(&params, &bundle.labels, &bundle.train, dropout)?;
        scale_grads(&mut grads, inv_l);
        adam_step(&mut params, &grads, &mut adam, config);

        let (probs, _) = net.forward_semi(&params, None)?;
        let val_metric = evaluate_accuracy(&probs, &bundle.labels, &bundle.val)?;
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss * inv_l,
            val_loss: mean_cross_entropy(&probs, &bundle.labels, &bundle.val),
            val_metric,
        });
        if best.observe(epoch, val_metric, &params, config.patience) {
            break;
        }
    }

    history.best_epoch = best.epoch;
    if !bundle.test.is_empty() {
        let (probs, _) = net.forward_semi(&best.params, None)?;
        history.test_metric = Some(evaluate_accuracy(&probs, &bundle.labels, &bundle.test)?);
    }
    Ok((best.params, history))
}

/// Scores of the given pairs under `sigmoid(Z Z^T)`.
pub fn pair_scores(a_hat: &Array2<f64>, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs.iter().map(|&(i, j)| a_hat[[i, j]]).collect()
}

/// Train the graph auto-encoder on the training edges of `split`, selecting
/// the epoch with the best validation AUC.
///
/// `op` must be built on `split.train_graph()`; the objective is the squared
/// reconstruction error averaged over all `n^2` entries.
pub fn train_gae(
    bundle: &DatasetBundle,
    op: &DiffusionOperator,
    arch: &Architecture,
    config: &TrainConfig,
    split: &EdgeSplit,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    if split.n != bundle.n() {
        return Err(GdenError::Shape(format!(
            "split covers {} nodes, dataset has {}",
            split.n,
            bundle.n()
        )));
    }
    let leaked = split
        .val_edges
        .iter()
        .chain(&split.test_edges)
        .any(|&(i, j, _)| op.graphs().iter().any(|g| g.has_edge(i, j)));
    if leaked {
        return Err(GdenError::InvalidParameter(
            "diffusion operator contains held-out edges; build it on the training graph".into(),
        ));
    }
    let target = split.train_graph()?;
    let net = Network::new(op, bundle.features.view(), false)?;
    let embed_dim = *arch.hidden.last().ok_or_else(|| {
        GdenError::InvalidParameter("auto-encoder needs at least one layer width".into())
    })?;
    let mut dims = vec![bundle.feature_dim()];
    dims.extend(&arch.hidden);
    debug_assert_eq!(*dims.last().unwrap(), embed_dim);
    let mut params = ModelParams::init(&dims, config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut rng = dropout_rng(config.seed);
    let mut best = BestTracker::new(&params);
    let mut history = TrainHistory::default();
    let (val_pairs, val_labels) = split.val_pairs();
    let n = bundle.n() as f64;
    let inv = 1.0 / (n * n);

    for epoch in 0..config.epochs {
        let dropout = (config.dropout > 0.0).then(|| Dropout {
            rate: config.dropout,
            rng: &mut rng,
        });
        let (loss, mut grads) = net.loss_and_grad_gae(&params, &target, dropout)?;
        scale_grads(&mut grads, inv);
        adam_step(&mut params, &grads, &mut adam, config);

        let (a_hat, _) = net.forward_gae(&params, None)?;
        let scores = pair_scores(&a_hat, &val_pairs);
        let val_metric = auc(&scores, &val_labels)?;
        let val_loss = scores
            .iter()
            .zip(&val_labels)
            .map(|(s, &l)| (s - if l { 1.0 } else { 0.0 }).powi(2))
            .sum::<f64>()
            / scores.len() as f64;
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss * inv,
            val_loss,
            val_metric,
        });
        if best.observe(epoch, val_metric, &params, config.patience) {
            break;
        }
    }

    history.best_epoch = best.epoch;
    let (test_pairs, test_labels) = split.test_pairs();
    if !test_pairs.is_empty() {
        let (a_hat, _) = net.forward_gae(&best.params, None)?;
        history.test_metric = Some(auc(&pair_scores(&a_hat, &test_pairs), &test_labels)?);
    }
    Ok((best.params, history))
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Per-row arg-max.
pub fn predictions(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn accuracy_cases() {
        let m = array![[0.9, 0.1], [0.2, 0.8], [0.5, 0.5], [0.3, 0.7]];
        let labels = vec![Some(0), Some(1), Some(0), Some(1)];
        assert_eq!(evaluate_accuracy(&m, &labels, &[0, 1, 2, 3]).unwrap(), 1.0);
        let wrong = vec![Some(1), Some(0), Some(1), Some(0)];
        assert_eq!(evaluate_accuracy(&m, &wrong, &[0, 1, 2, 3]).unwrap(), 0.0);
        let one = vec![Some(0), Some(0), Some(1), Some(0)];
        assert_eq!(evaluate_accuracy(&m, &one, &[0, 1, 2, 3]).unwrap(), 0.25);
        assert!(evaluate_accuracy(&m, &labels, &[]).is_err());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.4, 0.6], &[true, false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn auc_matches_pair_enumeration() {
        let scores = [0.3, 0.7, 0.7, 0.1, 0.5, 0.7, 0.2];
        let labels = [true, false, true, false, true, true, false];
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        assert!((auc(&scores, &labels).unwrap() - wins / total).abs() < 1e-15);
    }

    fn ring(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Graph::from_edges(n, &edges, true).unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = split_edges(&ring(100), 0.05, 0.10, 1).unwrap();
        assert_eq!((s.val_edges.len(), s.test_edges.len(), s.train_edges.len()), (5, 10, 85));
        assert_eq!(s.val_nonedges.len(), 5);
        assert_eq!(s.test_nonedges.len(), 10);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let g = ring(60);
        let a = split_edges(&g, 0.1, 0.2, 7).unwrap();
        assert_eq!(a, split_edges(&g, 0.1, 0.2, 7).unwrap());
        let key = |e: &(usize, usize, f64)| (e.0.min(e.1), e.0.max(e.1));
        let mut all: HashSet<(usize, usize)> = HashSet::new();
        for e in a.train_edges.iter().chain(&a.val_edges).chain(&a.test_edges) {
            assert!(all.insert(key(e)));
        }
        for &(i, j) in a.val_nonedges.iter().chain(&a.test_nonedges) {
            assert!(i != j && !g.has_edge(i, j));
        }
    }

    #[test]
    fn split_errors() {
        let mut k5 = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                k5.push((i, j, 1.0));
            }
        }
        let k5 = Graph::from_edges(5, &k5, true).unwrap();
        assert!(split_edges(&k5, 0.1, 0.2, 0).is_err());
        assert!(split_edges(&ring(5), 0.1, 0.1, 0).is_err());
        assert!(split_edges(&ring(50), 0.5, 0.5, 0).is_err());
    }

    fn tiny_params() -> ModelParams {
        ModelParams::init(&[3, 2], 4).unwrap()
    }

    #[test]
    fn adam_zero_gradients_leave_params() {
        let mut p = tiny_params();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let zero = Gradients {
            weights: p.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
        };
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        for _ in 0..100 {
            adam_step(&mut p, &zero, &mut st, &cfg);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_descends_quadratic() {
        // f(w) = w^2 from w = 5; with lr 0.1 the step size stays near 0.1,
        // so 50 steps end before the iterate can overshoot zero.
        let mut p = ModelParams {
            layer_dims: vec![1, 1],
            weights: vec![array![[5.0]]],
            seed: 0,
        };
        let cfg = TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut st = AdamState::new(&p);
        let (mut w_ref, mut m, mut v) = (5.0f64, 0.0, 0.0);
        let mut prev = 5.0f64;
        for t in 1..=50 {
            let w = p.weights[0][[0, 0]];
            let g = Gradients {
                weights: vec![array![[2.0 * w]]],
            };
            adam_step(&mut p, &g, &mut st, &cfg);
            let now = p.weights[0][[0, 0]];
            assert!(now.abs() < prev, "step {t}: {now} !< {prev}");
            prev = now.abs();

            let g = 2.0 * w_ref;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            w_ref -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((now - w_ref).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let cfg = TrainConfig::default();
        let run = || {
            let mut p = tiny_params();
            let mut st = AdamState::new(&p);
            for t in 0..20 {
                let g = Gradients {
                    weights: vec![Array2::from_shape_fn((3, 2), |(i, j)| ((i + 2 * j + t) as f64).sin())],
                };
                adam_step(&mut p, &g, &mut st, &cfg);
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { dropout: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn metrics_file_round_trip() {
        let h = TrainHistory {
            records: vec![
                EpochRecord { epoch: 0, train_loss: 1.5, val_loss: 1.25, val_metric: 0.5 },
                EpochRecord { epoch: 1, train_loss: 0.1 + 0.2, val_loss: 1.0, val_metric: 0.75 },
            ],
            best_epoch: 1,
            test_metric: Some(0.7),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        h.write_metrics(&path).unwrap();
        assert_eq!(TrainHistory::read_metrics(&path).unwrap(), h.records);
        assert!(h.to_jsonl().starts_with("{\"epoch\":0,\"train_loss\":1.5,"));
    }

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
