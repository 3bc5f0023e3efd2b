use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, DenseLayer, GatHead, GatLayer, GcnLayer, Layer, LayerCache, SageLayer};
use super::loss::{softmax_cross_entropy, softmax_rows};
use super::{DenseMatrix, GraphContext, NUM_OUTPUTS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gat,
    Sage,
    Mlp,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Gcn, Arch::Gat, Arch::Sage, Arch::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Gat => "gat",
            Arch::Sage => "sage",
            Arch::Mlp => "mlp",
        }
    }

    pub fn uses_graph(self) -> bool {
        self != Arch::Mlp
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "gat" => Ok(Arch::Gat),
            "sage" | "graphsage" => Ok(Arch::Sage),
            "mlp" => Ok(Arch::Mlp),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Widths of the hidden layers; the 3-logit output layer is appended.
    pub hidden: Vec<usize>,
    /// Attention heads on hidden GAT layers (the output layer uses one).
    pub heads: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Train / validation / test fractions of the labelled nodes.
    pub split: [f64; 3],
    /// Reject splits that leave a class without training nodes. Disabling it
    /// is only meant for sanity checks on collapsed label sets.
    pub require_all_classes: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Gcn,
            hidden: vec![64, 32],
            heads: 4,
            epochs: 500,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            seed: 0,
            split: [0.6, 0.2, 0.2],
            require_all_classes: true,
        }
    }
}

impl ModelConfig {
    pub fn with_arch(arch: Arch) -> Self {
        ModelConfig {
            arch,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be nonempty and positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.heads == 0 {
            return Err(Error::Config("heads must be at least 1".into()));
        }
        if self.arch == Arch::Gat {
            if let Some(w) = self.hidden.iter().find(|&&w| w % self.heads != 0) {
                return Err(Error::Config(format!(
                    "GAT hidden width {w} is not divisible by {} heads",
                    self.heads
                )));
            }
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("learning rate must be positive and weight decay non-negative".into()));
        }
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {:?} must sum to 1", self.split)));
        }
        if self.split[0] == 0.0 {
            return Err(Error::Config("training fraction must be positive".into()));
        }
        Ok(())
    }
}

/// A layer stack ending in a 3-logit head.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub layers: Vec<Layer>,
}

impl GnnModel {
    /// Glorot-initialised weights from `config.seed`, zero biases.
    pub fn init(input_dim: usize, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Shape("model input has zero features".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut widths = vec![input_dim];
        widths.extend(&config.hidden);
        widths.push(NUM_OUTPUTS);
        let last = widths.len() - 2;
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (idx, pair) in widths.windows(2).enumerate() {
            let (d_in, d_out) = (pair[0], pair[1]);
            let activation = if idx == last {
                Activation::Identity
            } else {
                Activation::Relu
            };
            let layer = match config.arch {
                Arch::Gcn => Layer::Gcn(GcnLayer::new(DenseMatrix::glorot(d_in, d_out, &mut rng), activation)),
                Arch::Mlp => Layer::Dense(DenseLayer::new(DenseMatrix::glorot(d_in, d_out, &mut rng), activation)),
                Arch::Sage => Layer::Sage(SageLayer::new(
                    DenseMatrix::glorot(d_in, d_out, &mut rng),
                    DenseMatrix::glorot(d_in, d_out, &mut rng),
                    activation,
                )),
                Arch::Gat => {
                    let output = idx == last;
                    let heads = if output { 1 } else { config.heads };
                    let width = d_out / heads;
                    let heads = (0..heads)
                        .map(|_| GatHead {
                            weight: DenseMatrix::glorot(d_in, width, &mut rng),
                            att_self: DenseMatrix::glorot(1, width, &mut rng),
                            att_neigh: DenseMatrix::glorot(1, width, &mut rng),
                        })
                        .collect();
                    Layer::Gat(GatLayer::new(heads, !output, activation))
                }
            };
            layers.push(layer);
        }
        Ok(GnnModel {
            config: config.clone(),
            input_dim,
            layers,
        })
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn forward(&self, x: &DenseMatrix, ctx: &GraphContext) -> Result<Vec<LayerCache>> {
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = caches.last().map_or(x, |c| c.output());
            let cache = layer.forward(input, ctx)?;
            caches.push(cache);
        }
        Ok(caches)
    }

    pub fn logits(&self, x: &DenseMatrix, ctx: &GraphContext) -> Result<DenseMatrix> {
        let caches = self.forward(x, ctx)?;
        Ok(caches.into_iter().last().expect("model has layers").into_output())
    }

    pub fn predict_proba(&self, x: &DenseMatrix, ctx: &GraphContext) -> Result<DenseMatrix> {
        Ok(softmax_rows(&self.logits(x, ctx)?))
    }

    /// Arg-max class per node, lowest index on ties.
    pub fn predict(&self, x: &DenseMatrix, ctx: &GraphContext) -> Result<Vec<usize>> {
        let logits = self.logits(x, ctx)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                (1..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
            })
            .collect())
    }

    /// Cross-entropy on `mask` and its gradient for every parameter.
    pub fn loss_and_grads(
        &self,
        x: &DenseMatrix,
        ctx: &GraphContext,
        labels: &[Option<usize>],
        mask: &[usize],
    ) -> Result<(f64, Vec<DenseMatrix>)> {
        let caches = self.forward(x, ctx)?;
        let logits = caches.last().expect("model has layers").output();
        let (loss, mut grad) = softmax_cross_entropy(logits, labels, mask)?;
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(&caches).rev() {
            let (grad_in, grads) = layer.backward(cache, &grad, ctx)?;
            per_layer.push(grads);
            grad = grad_in;
        }
        per_layer.reverse();
        Ok((loss, per_layer.into_iter().flatten().collect()))
    }
}
