//! Full-batch semi-supervised training with Adam.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{score, Metrics};
use super::model::{Arch, GnnModel, ModelConfig};
use super::{DenseMatrix, GraphContext, NUM_OUTPUTS};
use crate::city::CityGraph;
use crate::{Error, Result};

/// Node indices of the train / validation / test partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class shuffled partition of the labelled nodes. Each class puts
/// `max(1, round(f_train * n_c))` nodes in train and `round(f_val * n_c)` in
/// validation; the rest go to test.
pub fn stratified_split(labels: &[Option<usize>], fractions: [f64; 3], seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..NUM_OUTPUTS {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(class))
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = ((fractions[0] * n as f64).round() as usize).clamp(1, n);
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        split.train.extend(&members[..n_train]);
        split.val.extend(&members[n_train..n_train + n_val]);
        split.test.extend(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub arch: Arch,
    pub seed: u64,
    pub loss_curve: Vec<f64>,
    pub train_accuracy: f64,
    pub val: Option<Metrics>,
    pub test: Metrics,
    pub feature_dim: usize,
    /// Wall-clock seconds; excluded from equality-sensitive exports.
    pub wall_time_s: f64,
}

struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(model: &GnnModel, lr: f64, weight_decay: f64) -> Self {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.data().len()).collect();
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    fn update(&mut self, model: &mut GnnModel, grads: &[DenseMatrix]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (param, grad)) in model.params_mut().into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
                let g = g + self.weight_decay * *w;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

fn check_labels(labels: &[Option<usize>], split: &Split, cfg: &ModelConfig) -> Result<()> {
    let mut per_class = [0usize; NUM_OUTPUTS];
    for &l in labels.iter().flatten() {
        if l >= NUM_OUTPUTS {
            return Err(Error::Shape(format!("label {l} out of range")));
        }
        per_class[l] += 1;
    }
    if split.train.is_empty() {
        return Err(Error::DegenerateSplit("no labelled training nodes".into()));
    }
    if cfg.require_all_classes {
        if let Some(c) = (0..NUM_OUTPUTS).find(|&c| per_class[c] < 3) {
            return Err(Error::DegenerateSplit(format!(
                "class {c} has {} labelled node(s), need at least 3",
                per_class[c]
            )));
        }
        for c in 0..NUM_OUTPUTS {
            if !split.train.iter().any(|&i| labels[i] == Some(c)) {
                return Err(Error::DegenerateSplit(format!("class {c} absent from the training split")));
            }
        }
    }
    Ok(())
}

/// Trains on raw arrays. MLP models see a graph with no edges.
pub fn train_on(
    features: &DenseMatrix,
    neighbors: &[Vec<usize>],
    labels: &[Option<usize>],
    cfg: &ModelConfig,
) -> Result<(GnnModel, TrainReport, Split)> {
    let model = GnnModel::init(features.cols(), cfg)?;
    train_model(model, features, neighbors, labels)
}

/// Trains an already initialised model in place of a fresh one.
pub fn train_model(
    mut model: GnnModel,
    features: &DenseMatrix,
    neighbors: &[Vec<usize>],
    labels: &[Option<usize>],
) -> Result<(GnnModel, TrainReport, Split)> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if labels.len() != features.rows() || neighbors.len() != features.rows() {
        return Err(Error::Shape(format!(
            "{} feature rows, {} labels, {} adjacency rows",
            features.rows(),
            labels.len(),
            neighbors.len()
        )));
    }
    if !features.is_finite() {
        return Err(Error::Numeric("feature matrix has non-finite entries".into()));
    }
    let start = Instant::now();
    let ctx = context_for(cfg.arch, neighbors)?;
    let split = stratified_split(labels, cfg.split, cfg.seed);
    check_labels(labels, &split, &cfg)?;

    let mut adam = Adam::new(&model, cfg.learning_rate, cfg.weight_decay);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grads) = model.loss_and_grads(features, &ctx, labels, &split.train)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss became {loss} at epoch {epoch}")));
        }
        loss_curve.push(loss);
        adam.update(&mut model, &grads);
    }

    let predictions = model.predict(features, &ctx)?;
    let eval = |mask: &[usize]| -> Result<Metrics> {
        score(mask.iter().map(|&i| (labels[i].expect("split nodes are labelled"), predictions[i])))
    };
    let train_accuracy = eval(&split.train)?.accuracy;
    let val = if split.val.is_empty() {
        None
    } else {
        Some(eval(&split.val)?)
    };
    let test_mask = if split.test.is_empty() { &split.train } else { &split.test };
    let test = eval(test_mask)?;
    let report = TrainReport {
        arch: cfg.arch,
        seed: cfg.seed,
        loss_curve,
        train_accuracy,
        val,
        test,
        feature_dim: features.cols(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report, split))
}

pub(crate) fn context_for(arch: Arch, neighbors: &[Vec<usize>]) -> Result<GraphContext> {
    if arch.uses_graph() {
        GraphContext::new(neighbors)
    } else {
        Ok(GraphContext::isolated(neighbors.len()))
    }
}

/// Trains on a city graph's features, adjacency and labels.
pub fn train(graph: &CityGraph, cfg: &ModelConfig) -> Result<(GnnModel, TrainReport)> {
    let labels = graph.label_indices();
    let (model, report, _) = train_on(graph.features(), graph.weights().neighbors(), &labels, cfg)?;
    Ok((model, report))
}

/// Predicted class index for every node of the graph.
pub fn predict_graph(model: &GnnModel, graph: &CityGraph) -> Result<Vec<usize>> {
    let ctx = context_for(model.arch(), graph.weights().neighbors())?;
    model.predict(graph.features(), &ctx)
}

/// Scores a trained model on the given node mask.
pub fn evaluate(model: &GnnModel, graph: &CityGraph, mask: &[usize]) -> Result<Metrics> {
    evaluate_on(model, graph.features(), graph.weights().neighbors(), &graph.label_indices(), mask)
}

pub fn evaluate_on(
    model: &GnnModel,
    features: &DenseMatrix,
    neighbors: &[Vec<usize>],
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<Metrics> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let ctx = context_for(model.arch(), neighbors)?;
    let predictions = model.predict(features, &ctx)?;
    let pairs = mask
        .iter()
        .map(|&i| {
            labels
                .get(i)
                .copied()
                .flatten()
                .map(|l| (l, predictions[i]))
                .ok_or_else(|| Error::Shape(format!("node {i} in the mask has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    score(pairs)
}

/// Keeps only the named feature groups, then retrains.
pub fn ablate(graph: &CityGraph, groups_to_keep: &[&str], cfg: &ModelConfig) -> Result<TrainReport> {
    let reduced = graph.keep_groups(groups_to_keep)?;
    Ok(train(&reduced, cfg)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<Option<usize>> = (0..50)
            .map(|i| if i % 5 == 4 { None } else { Some(i % 3) })
            .collect();
        let s = stratified_split(&labels, [0.6, 0.2, 0.2], 3);
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        let labelled: Vec<usize> = (0..50).filter(|i| labels[*i].is_some()).collect();
        assert_eq!(all, labelled);
        for c in 0..3 {
            let n = labelled.iter().filter(|&&i| labels[i] == Some(c)).count();
            let t = s.train.iter().filter(|&&i| labels[i] == Some(c)).count();
            assert_eq!(t, (0.6 * n as f64).round() as usize);
        }
        assert_eq!(s, stratified_split(&labels, [0.6, 0.2, 0.2], 3));
        assert_ne!(s, stratified_split(&labels, [0.6, 0.2, 0.2], 4));
    }

    #[test]
    fn missing_class_is_a_degenerate_split() {
        let x = DenseMatrix::zeros(6, 2);
        let nb = vec![Vec::new(); 6];
        let labels = vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)];
        let cfg = ModelConfig {
            epochs: 2,
            ..Default::default()
        };
        let err = train_on(&x, &nb, &labels, &cfg).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit(_)));
    }
}
