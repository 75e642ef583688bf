use gden::model::{ModelParams, Network};
use gden::synthetic::{sbm_dataset, two_clusters};
use gden::train::{split_edges, train_gae, train_semi, Architecture, TrainConfig};
use gden::{DiffusionKind, DiffusionOperator, SolverConfig, Variant};

fn nl_operator(g: &gden::Graph) -> DiffusionOperator {
    DiffusionOperator::new(
        DiffusionKind::NormalizedLaplacian,
        vec![g.clone()],
        0.65,
        Variant::Paper,
        SolverConfig::default(),
    )
    .unwrap()
}

#[test]
fn two_clusters_are_separated() {
    let data = two_clusters(10, 1).unwrap();
    for kind in DiffusionKind::ALL {
        let op = DiffusionOperator::new(
            kind,
            data.graphs.clone(),
            kind.default_alpha(),
            Variant::Paper,
            SolverConfig::default(),
        )
        .unwrap();
        let cfg = TrainConfig {
            patience: 50,
            ..TrainConfig::default()
        };
        let (_, hist) = train_semi(&data, &op, &Architecture::default(), &cfg).unwrap();
        assert_eq!(hist.test_metric, Some(1.0), "{kind}");
    }
}

#[test]
fn zero_learning_rate_returns_initialization() {
    let data = two_clusters(10, 2).unwrap();
    let op = nl_operator(data.graph());
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    let (params, _) = train_semi(&data, &op, &Architecture::default(), &cfg).unwrap();
    assert_eq!(params, ModelParams::init(&[4, 16, 2], 9).unwrap());
}

#[test]
fn semi_training_is_deterministic() {
    let data = two_clusters(10, 3).unwrap();
    let op = nl_operator(data.graph());
    let cfg = TrainConfig {
        epochs: 30,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = train_semi(&data, &op, &Architecture::default(), &cfg).unwrap();
    let b = train_semi(&data, &op, &Architecture::default(), &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn early_stopping_keeps_best_validation_epoch() {
    let data = two_clusters(10, 4).unwrap();
    let op = nl_operator(data.graph());
    let cfg = TrainConfig {
        epochs: 60,
        patience: 5,
        ..TrainConfig::default()
    };
    let (params, hist) = train_semi(&data, &op, &Architecture::default(), &cfg).unwrap();
    let max = hist.records.iter().map(|r| r.val_metric).fold(f64::MIN, f64::max);
    assert_eq!(hist.best().unwrap().val_metric, max);
    let net = Network::new(&op, data.features.view(), true).unwrap();
    let (probs, _) = net.forward_semi(&params, None).unwrap();
    let acc = gden::train::evaluate_accuracy(&probs, &data.labels, &data.val).unwrap();
    assert_eq!(acc, max);
    let since = hist.records.len() - 1 - hist.best_epoch;
    assert!(hist.records.len() == 60 || since == 5);
}

#[test]
fn semi_training_loss_decreases() {
    let data = two_clusters(10, 5).unwrap();
    let op = nl_operator(data.graph());
    let cfg = TrainConfig {
        epochs: 10,
        dropout: 0.0,
        patience: 100,
        ..TrainConfig::default()
    };
    let (_, hist) = train_semi(&data, &op, &Architecture::default(), &cfg).unwrap();
    assert!(hist.records.last().unwrap().train_loss < hist.records[0].train_loss);
}

fn gae_run(seed: u64) -> gden::train::TrainHistory {
    let data = sbm_dataset(100, 2, 0.25, 0.01, seed).unwrap();
    let split = split_edges(data.graph(), 0.05, 0.10, seed).unwrap();
    let op = nl_operator(&split.train_graph().unwrap().add_self_loops(1.0, true).unwrap());
    let arch = Architecture {
        hidden: vec![32, 16],
        head_diffusion: false,
    };
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::gae()
    };
    train_gae(&data, &op, &arch, &cfg, &split).unwrap().1
}

#[test]
fn gae_beats_chance_on_block_model() {
    let mean = (0..5).map(|s| gae_run(s).test_metric.unwrap()).sum::<f64>() / 5.0;
    assert!(mean > 0.55, "{mean}");
}

#[test]
fn gae_training_is_deterministic() {
    assert_eq!(gae_run(3), gae_run(3));
}

#[test]
fn gae_rejects_leaky_operator() {
    let data = sbm_dataset(60, 2, 0.3, 0.02, 1).unwrap();
    let split = split_edges(data.graph(), 0.05, 0.10, 1).unwrap();
    let op = nl_operator(data.graph());
    let arch = Architecture {
        hidden: vec![8],
        head_diffusion: false,
    };
    assert!(train_gae(&data, &op, &arch, &TrainConfig::gae(), &split).is_err());
}
