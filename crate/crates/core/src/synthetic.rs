//! Small generated datasets for tests, benches and the acceptance suite.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::DatasetBundle;
use crate::error::Result;
use crate::graph::Graph;

/// Two clusters of `half` nodes each, ring plus chords inside every cluster
/// and a single bridge between them. Features are a noisy cluster indicator
/// in four dimensions; two nodes per class are labelled for training.
pub fn two_clusters(half: usize, seed: u64) -> Result<DatasetBundle> {
    let n = 2 * half;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for c in 0..2 {
        let base = c * half;
        for i in 0..half {
            edges.push((base + i, base + (i + 1) % half, 1.0));
            edges.push((base + i, base + (i + 2) % half, 1.0));
        }
    }
    edges.push((0, half, 1.0));
    let graph = Graph::from_edges(n, &edges, true)?;
    let labels: Vec<Option<usize>> = (0..n).map(|i| Some(i / half)).collect();
    let features = Array2::from_shape_fn((n, 4), |(i, j)| {
        let signal = if j % 2 == i / half { 1.0 } else { 0.0 };
        signal + 0.3 * rng.gen::<f64>()
    });
    let mut order: Vec<usize> = (0..half).collect();
    order.shuffle(&mut rng);
    let pick = |k: std::ops::Range<usize>| -> Vec<usize> {
        let mut v: Vec<usize> = order[k].iter().flat_map(|&i| [i, i + half]).collect();
        v.sort_unstable();
        v
    };
    Ok(DatasetBundle {
        name: "two-clusters".into(),
        graphs: vec![graph],
        features,
        labels,
        num_classes: 2,
        train: pick(0..2),
        val: pick(2..4),
        test: pick(4..half),
    })
}

/// Stochastic block model with `blocks` equal blocks, within-block edge
/// probability `p_in` and between-block probability `p_out`.
pub fn sbm_graph(n: usize, blocks: usize, p_in: f64, p_out: f64, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = |i: usize| i * blocks / n;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block(i) == block(j) { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    Graph::from_edges(n, &edges, true)
}

/// A featureless block-model dataset: identity features, block labels, no
/// train/validation/test masks.
pub fn sbm_dataset(n: usize, blocks: usize, p_in: f64, p_out: f64, seed: u64) -> Result<DatasetBundle> {
    let graph = sbm_graph(n, blocks, p_in, p_out, seed)?;
    Ok(DatasetBundle {
        name: format!("sbm-{n}"),
        graphs: vec![graph],
        features: Array2::eye(n),
        labels: (0..n).map(|i| Some(i * blocks / n)).collect(),
        num_classes: blocks,
        train: vec![],
        val: vec![],
        test: vec![],
    })
}

/// Erdos-Renyi graph with random positive weights in `[0.5, 2)`.
pub fn random_weighted_graph(n: usize, p: f64, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j, rng.gen_range(0.5..2.0)));
            }
        }
    }
    Graph::from_edges(n, &edges, true)
}

/// Connected variant of [`random_weighted_graph`]: a ring is added first so
/// every degree is positive.
pub fn random_connected_graph(n: usize, p: f64, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize, f64)> = if n > 1 {
        (0..n).map(|i| (i, (i + 1) % n, rng.gen_range(0.5..2.0))).collect()
    } else {
        vec![(0, 0, 1.0)]
    };
    for i in 0..n {
        for j in i + 2..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j, rng.gen_range(0.5..2.0)));
            }
        }
    }
    Graph::from_edges(n, &edges, true)
}

/// Dense matrix of uniform values in `[-1, 1)`.
pub fn random_features(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
}
