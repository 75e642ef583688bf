mod common;

use gden::model::{ModelParams, Network};
use gden::synthetic::random_features;
use gden::{DiffusionKind, DiffusionOperator, Graph, SolverConfig, Variant};
use ndarray::Array2;

#[test]
fn semi_gradients_match_finite_differences() {
    for kind in DiffusionKind::ALL {
        for seed in 0..4 {
            let err = common::semi_gradient_error(kind, seed);
            assert!(err < 1e-4, "{kind} seed {seed}: {err}");
        }
    }
}

#[test]
fn gae_gradients_match_finite_differences() {
    for kind in DiffusionKind::ALL {
        for seed in 0..4 {
            let err = common::gae_gradient_error(kind, seed);
            assert!(err < 1e-4, "{kind} seed {seed}: {err}");
        }
    }
}

fn relu(a: Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn softmax(a: Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::MIN, |x, &y| x.max(y));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// On an edgeless graph the paper Laplacian operator is `alpha * I`, so the
/// network is a plain MLP on scaled inputs.
#[test]
fn edgeless_graph_reduces_to_mlp() {
    let n = 9;
    let alpha = 0.7;
    let g = Graph::from_edges(n, &[], true).unwrap();
    let op = DiffusionOperator::new(DiffusionKind::LaplacianReg, vec![g], alpha, Variant::Paper, SolverConfig::default())
        .unwrap();
    let x = random_features(n, 4, 1);
    let p = ModelParams::init(&[4, 6, 5, 3], 2).unwrap();
    let h1 = relu((alpha * &x).dot(&p.weights[0]));
    let h2 = relu((alpha * &h1).dot(&p.weights[1]));
    let expected = softmax((alpha * &h2).dot(&p.weights[2]));
    let net = Network::new(&op, x.view(), true).unwrap();
    let (m, _) = net.forward_semi(&p, None).unwrap();
    assert!(common::max_abs_diff(&m, &expected) < 1e-12);

    let plain = Network::new(&op, x.view(), false).unwrap();
    let (m, _) = plain.forward_semi(&p, None).unwrap();
    assert!(common::max_abs_diff(&m, &softmax(h2.dot(&p.weights[2]))) < 1e-12);
}

/// With no hidden layer the classifier is `softmax(H(X) W)`, or `softmax(X W)`
/// with the head diffusion off.
#[test]
fn head_only_model() {
    let op = common::random_operator(DiffusionKind::NormalizedLaplacian, 10, 3, SolverConfig::default());
    let x = random_features(10, 4, 4);
    let p = ModelParams::init(&[4, 3], 5).unwrap();
    let hx = common::closed_form(
        DiffusionKind::NormalizedLaplacian,
        Variant::Paper,
        op.alpha(),
        op.graphs(),
        &x,
    );
    for (head, input) in [(true, &hx), (false, &x)] {
        let expected = softmax(input.dot(&p.weights[0]));
        let net = Network::new(&op, x.view(), head).unwrap();
        let (m, _) = net.forward_semi(&p, None).unwrap();
        assert!(common::max_abs_diff(&m, &expected) < 1e-9);
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }
    let labels: Vec<Option<usize>> = (0..10).map(|i| Some(i % 3)).collect();
    let net = Network::new(&op, x.view(), true).unwrap();
    let (_, grads) = net.loss_and_grad_semi(&p, &labels, &[0, 1, 2, 3], None).unwrap();
    let err = common::gradient_error(&p, &grads, |q| {
        net.loss_and_grad_semi(q, &labels, &[0, 1, 2, 3], None).unwrap().0
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gae_scores_are_symmetric_probabilities() {
    let op = common::random_operator(DiffusionKind::Rwr, 12, 6, SolverConfig::default());
    let x = random_features(12, 4, 7);
    let p = ModelParams::init(&[4, 8, 3], 8).unwrap();
    let net = Network::new(&op, x.view(), false).unwrap();
    let (a, _) = net.forward_gae(&p, None).unwrap();
    assert_eq!(a, a.t().to_owned());
    assert!(a.iter().all(|&v| (0.5..1.0).contains(&v)));
}
