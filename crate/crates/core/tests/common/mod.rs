//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use gden::{DiffusionKind, Graph, Variant};
use ndarray::Array2;

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| m[[x, c]].abs().total_cmp(&m[[y, c]].abs()))
            .unwrap();
        assert!(m[[p, c]].abs() > 1e-300, "singular");
        for k in 0..n {
            m.swap([c, k], [p, k]);
            inv.swap([c, k], [p, k]);
        }
        let d = m[[c, c]];
        for k in 0..n {
            m[[c, k]] /= d;
            inv[[c, k]] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[[r, c]];
                if f != 0.0 {
                    for k in 0..n {
                        m[[r, k]] -= f * m[[c, k]];
                        inv[[r, k]] -= f * inv[[c, k]];
                    }
                }
            }
        }
    }
    inv
}

/// Dense adjacency rebuilt from the undirected edge list.
pub fn adjacency(g: &Graph) -> Array2<f64> {
    let mut a = Array2::zeros((g.n(), g.n()));
    for &(i, j, w) in g.edges() {
        a[[i, j]] += w;
        if i != j {
            a[[j, i]] += w;
        }
    }
    a
}

pub fn laplacian(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut l = -a.clone();
    for i in 0..n {
        l[[i, i]] += a.row(i).sum();
    }
    l
}

/// `Z` from the dense closed form of each kind and variant.
pub fn closed_form(kind: DiffusionKind, variant: Variant, alpha: f64, graphs: &[Graph], x: &Array2<f64>) -> Array2<f64> {
    let n = graphs[0].n();
    let eye = Array2::<f64>::eye(n);
    let a = adjacency(&graphs[0]);
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    match kind {
        DiffusionKind::LaplacianReg | DiffusionKind::MultiLaplacian => {
            let mut l = Array2::zeros((n, n));
            for g in graphs {
                l = l + laplacian(&adjacency(g));
            }
            let m = match variant {
                Variant::Paper => &eye + &(alpha * &l),
                Variant::Derived => alpha * &eye + &l,
            };
            alpha * inverse(&m).dot(x)
        }
        DiffusionKind::Rwr => {
            let p = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / deg[j]);
            (1.0 - alpha) * inverse(&(&eye - &(alpha * &p))).dot(x)
        }
        DiffusionKind::NormalizedLaplacian => {
            let s = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt());
            let pre = match variant {
                Variant::Paper => alpha,
                Variant::Derived => 1.0 - alpha,
            };
            pre * inverse(&(&eye - &(alpha * &s))).dot(x)
        }
    }
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random alpha inside the legal range of `kind`.
pub fn legal_alpha(kind: DiffusionKind, u: f64) -> f64 {
    if kind.needs_unit_alpha() {
        0.05 + 0.9 * u
    } else {
        0.1 + 9.9 * u
    }
}

/// Operator for `kind` at its default alpha on a random connected graph.
pub fn random_operator(kind: DiffusionKind, n: usize, seed: u64, cfg: gden::SolverConfig) -> gden::DiffusionOperator {
    let graphs: Vec<Graph> = if kind == DiffusionKind::MultiLaplacian {
        (0..2)
            .map(|v| gden::synthetic::random_connected_graph(n, 0.25, seed * 31 + v).unwrap())
            .collect()
    } else {
        vec![gden::synthetic::random_connected_graph(n, 0.25, seed).unwrap()]
    };
    gden::DiffusionOperator::new(kind, graphs, kind.default_alpha(), Variant::Paper, cfg).unwrap()
}

/// Central-difference step for the gradient checks.
pub const FD_STEP: f64 = 1e-4;

/// Instances with a pre-activation closer than this to the ReLU kink are
/// resampled: the loss is not differentiable within reach of the step.
pub const KINK_MARGIN: f64 = 1e-3;

/// Largest reconstructed score accepted in a gradient check.
pub const SATURATION: f64 = 0.9999;

/// Largest per-matrix relative error `|g - fd| / max(|g|, |fd|)` between an
/// analytic gradient and central differences of `loss`.
pub fn gradient_error(
    params: &gden::model::ModelParams,
    analytic: &gden::model::Gradients,
    loss: impl Fn(&gden::model::ModelParams) -> f64,
) -> f64 {
    let h = FD_STEP;
    let mut worst: f64 = 0.0;
    for (k, w) in params.weights.iter().enumerate() {
        let mut fd = Array2::zeros(w.dim());
        for idx in ndarray::indices(w.dim()) {
            let mut p = params.clone();
            p.weights[k][idx] += h;
            let up = loss(&p);
            p.weights[k][idx] -= 2.0 * h;
            let down = loss(&p);
            fd[idx] = (up - down) / (2.0 * h);
        }
        let g = &analytic.weights[k];
        let diff = (g - &fd).mapv(|v| v * v).sum().sqrt();
        let scale = g.mapv(|v| v * v).sum().sqrt().max(fd.mapv(|v| v * v).sum().sqrt());
        if scale > 1e-12 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

fn near_kink(cache: &gden::model::ForwardCache) -> bool {
    cache
        .pre_activations
        .iter()
        .any(|pa| pa.iter().any(|v| v.abs() < KINK_MARGIN))
}

/// Relative gradient error of the classification loss on a 12-node instance.
///
/// The analytic gradient uses the iterative solver; the finite differences
/// use a dense LU factorization of the same operator.
pub fn semi_gradient_error(kind: DiffusionKind, seed: u64) -> f64 {
    use gden::model::{ModelParams, Network};
    use rand::{Rng, SeedableRng};
    let n = 12;
    for attempt in 0.. {
        let s = seed * 1000 + attempt;
        let op = random_operator(kind, n, s, gden::SolverConfig::default().with_tolerance(1e-14));
        let oracle = random_operator(kind, n, s, gden::SolverConfig::dense());
        let x = gden::synthetic::random_features(n, 3, s + 1000);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
        let labels: Vec<Option<usize>> = (0..n).map(|_| Some(rng.gen_range(0..3))).collect();
        let mask: Vec<usize> = (0..n).filter(|i| i % 3 != 2).collect();
        let params = ModelParams::init(&[3, 5, 4, 3], s).unwrap();
        let net = Network::new(&op, x.view(), seed % 2 == 0).unwrap();
        if near_kink(&net.forward_semi(&params, None).unwrap().1) {
            continue;
        }
        let (_, grads) = net.loss_and_grad_semi(&params, &labels, &mask, None).unwrap();
        let fd_net = Network::new(&oracle, x.view(), seed % 2 == 0).unwrap();
        return gradient_error(&params, &grads, |p| {
            fd_net.loss_and_grad_semi(p, &labels, &mask, None).unwrap().0
        });
    }
    unreachable!()
}

/// Relative gradient error of the reconstruction loss on a 12-node instance.
pub fn gae_gradient_error(kind: DiffusionKind, seed: u64) -> f64 {
    use gden::model::{ModelParams, Network};
    let n = 12;
    for attempt in 0.. {
        let s = seed * 1000 + attempt;
        let op = random_operator(kind, n, s, gden::SolverConfig::default().with_tolerance(1e-14));
        let oracle = random_operator(kind, n, s, gden::SolverConfig::dense());
        let target = gden::synthetic::random_weighted_graph(n, 0.3, s + 77).unwrap();
        let target = Graph::from_edges(
            n,
            &target.edges().iter().map(|&(i, j, _)| (i, j, 1.0)).collect::<Vec<_>>(),
            true,
        )
        .unwrap();
        let x = gden::synthetic::random_features(n, 4, s + 2000);
        let params = ModelParams::init(&[4, 5, 3], s).unwrap();
        let net = Network::new(&op, x.view(), false).unwrap();
        let (scores, cache) = net.forward_gae(&params, None).unwrap();
        // saturated decoders have gradients below finite-difference roundoff
        if near_kink(&cache) || scores.iter().any(|&a| a > SATURATION) {
            continue;
        }
        let (_, grads) = net.loss_and_grad_gae(&params, &target, None).unwrap();
        let fd_net = Network::new(&oracle, x.view(), false).unwrap();
        return gradient_error(&params, &grads, |p| fd_net.loss_and_grad_gae(p, &target, None).unwrap().0);
    }
    unreachable!()
}
