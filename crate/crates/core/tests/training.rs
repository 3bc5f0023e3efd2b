//! Training, evaluation and ablation on small synthetic city graphs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use restograph::city::{knn_weights, CityGraph, FeatureGroup, RestorationClass};
use restograph::gnn::{
    ablate, decode_checkpoint, encode_checkpoint, evaluate, score, train, Arch, DenseMatrix,
    ModelConfig,
};
use restograph::Error;

/// `n` roads on a line grouped into blocks of `block` consecutive roads
/// sharing a class; block classes are a shuffle with shares following
/// `weights`. Group `signal` (5 columns) encodes the class with noise,
/// group `noise` is pure noise.
fn planted_graph(n: usize, weights: [f64; 3], signal: f64, seed: u64) -> CityGraph {
    planted_graph_with(n, weights, signal, 4, 15, seed)
}

fn planted_graph_with(n: usize, weights: [f64; 3], signal: f64, block: usize, noise: usize, seed: u64) -> CityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("r{i:03}")).collect();
    let mid: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * 10.0, 0.0)).collect();
    let blocks = n.div_ceil(block);
    let total: f64 = weights.iter().sum();
    let mut classes: Vec<usize> = Vec::with_capacity(blocks);
    for c in 0..3 {
        let upto = ((weights[..=c].iter().sum::<f64>() / total) * blocks as f64).round() as usize;
        classes.resize(upto.max(classes.len()), c);
    }
    classes.shuffle(&mut rng);
    let labels: Vec<Option<RestorationClass>> =
        (0..n).map(|i| RestorationClass::from_index(classes[i / block])).collect();
    let mut x = DenseMatrix::zeros(n, 5 + noise);
    for i in 0..n {
        let c = labels[i].unwrap().index();
        for j in 0..5 + noise {
            let planted = if j < 5 && j % 3 == c { signal } else { 0.0 };
            x[(i, j)] = planted + rng.gen_range(-0.5..0.5);
        }
    }
    let groups = vec![
        FeatureGroup { name: "signal".into(), start: 0, end: 5 },
        FeatureGroup { name: "noise".into(), start: 5, end: 5 + noise },
    ];
    let w = knn_weights(&ids, &mid, 3).unwrap();
    CityGraph::from_parts(ids, mid, x, groups, w, labels).unwrap()
}

fn cfg(arch: Arch, seed: u64) -> ModelConfig {
    ModelConfig { epochs: 150, hidden: vec![16, 8], seed, ..ModelConfig::with_arch(arch) }
}

#[test]
fn keeping_every_group_equals_plain_training() {
    let g = planted_graph(60, [1.0, 1.0, 1.0], 1.0, 1);
    for arch in Arch::ALL {
        let mut a = ablate(&g, &["signal", "noise"], &cfg(arch, 2)).unwrap();
        let mut b = train(&g, &cfg(arch, 2)).unwrap().1;
        a.wall_time_s = 0.0;
        b.wall_time_s = 0.0;
        assert_eq!(a, b, "{arch}");
    }
}

#[test]
fn dropping_a_group_removes_its_columns() {
    let g = planted_graph(60, [1.0, 1.0, 1.0], 1.0, 1);
    let report = ablate(&g, &["noise"], &cfg(Arch::Gcn, 0)).unwrap();
    assert_eq!(report.feature_dim, 15);
    assert!(ablate(&g, &[], &cfg(Arch::Gcn, 0)).is_err());
    assert!(ablate(&g, &["missing"], &cfg(Arch::Gcn, 0)).is_err());
}

#[test]
fn dropping_the_signal_group_costs_accuracy() {
    // a narrow noise group; wide random columns let the graph layers memorise
    // training nodes and spread their labels along the blocks
    let g = planted_graph_with(120, [1.0, 1.0, 1.0], 1.0, 4, 5, 3);
    let mut full = 0.0;
    let mut dropped = 0.0;
    for seed in 0..10 {
        full += ablate(&g, &["signal", "noise"], &cfg(Arch::Gat, seed)).unwrap().test.accuracy;
        dropped += ablate(&g, &["noise"], &cfg(Arch::Gat, seed)).unwrap().test.accuracy;
    }
    let (full, dropped) = (full / 10.0, dropped / 10.0);
    assert!(full - dropped > 0.10, "full {full:.3} vs dropped {dropped:.3}");
}

#[test]
fn zeroed_features_fall_back_to_majority_rate() {
    let g = planted_graph(150, [3.0, 1.0, 1.0], 1.0, 4);
    let zeros = DenseMatrix::zeros(g.n(), g.features().cols());
    let blank = g.with_features(zeros, g.groups().to_vec()).unwrap();
    for arch in Arch::ALL {
        for seed in 0..10 {
            let report = train(&blank, &cfg(arch, seed)).unwrap().1;
            let support = report.test.support();
            let majority = (0..3)
                .map(|c| report.test.confusion[c].iter().sum::<usize>())
                .max()
                .unwrap() as f64
                / support as f64;
            assert!(
                (report.test.accuracy - majority).abs() <= 0.10,
                "{arch} seed {seed}: accuracy {} vs majority {majority}",
                report.test.accuracy
            );
        }
    }
}

#[test]
fn absent_training_class_is_a_degenerate_split() {
    let g = planted_graph(40, [1.0, 1.0, 0.0], 1.0, 5);
    let err = train(&g, &cfg(Arch::Gcn, 0)).unwrap_err();
    assert!(matches!(err, Error::DegenerateSplit(_)));
    assert!(err.to_string().contains("degenerate split"));
}

#[test]
fn evaluation_examples() {
    let perfect = score((0..9).map(|i| (i % 3, i % 3))).unwrap();
    assert_eq!(perfect.accuracy, 1.0);
    assert_eq!(perfect.macro_f1, 1.0);
    assert_eq!(perfect.confusion, [[3, 0, 0], [0, 3, 0], [0, 0, 3]]);
    let constant = score((0..9).map(|i| (i % 3, 0))).unwrap();
    assert!((constant.accuracy - 1.0 / 3.0).abs() < 1e-15);
    assert!((constant.macro_f1 - 0.5 / 3.0).abs() < 1e-15);
    let one_off = score((0..10).map(|i| (i % 3, if i == 4 { 2 } else { i % 3 }))).unwrap();
    assert!((one_off.accuracy - 0.9).abs() < 1e-15);
    for m in [perfect, constant, one_off] {
        let rows: usize = m.confusion.iter().map(|r| r.iter().sum::<usize>()).sum();
        assert_eq!(rows, m.support());
        assert!((0.0..=1.0).contains(&m.accuracy) && (0.0..=1.0).contains(&m.macro_f1));
    }
}

#[test]
fn trained_model_survives_checkpoint_round_trip() {
    let g = planted_graph(60, [1.0, 1.0, 1.0], 1.0, 6);
    for arch in Arch::ALL {
        let (model, _) = train(&g, &cfg(arch, 1)).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&model).unwrap()).unwrap();
        let all: Vec<usize> = (0..g.n()).collect();
        assert_eq!(evaluate(&back, &g, &all).unwrap(), evaluate(&model, &g, &all).unwrap());
    }
}


