//! Graph neural network engine: dense and sparse matrices, GCN / GAT /
//! GraphSAGE / MLP layers with analytic gradients, softmax cross-entropy, Adam,
//! evaluation and feature-group ablation.

mod checkpoint;
mod layers;
mod loss;
mod matrix;
mod metrics;
mod model;
mod propagation;
mod report;
mod sparse;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use layers::{
    gat_forward, gcn_forward, sage_forward, Activation, DenseLayer, GatHead, GatLayer, GcnLayer,
    Layer, LayerCache, SageLayer,
};
pub use loss::{cross_entropy_loss, softmax_cross_entropy, softmax_rows};
pub use matrix::{dot, DenseMatrix};
pub use metrics::{score, Metrics};
pub use model::{Arch, GnnModel, ModelConfig};
pub use propagation::{
    mean_aggregator, normalize_adjacency, normalize_adjacency_sparse, validate_neighbors,
    GraphContext,
};
pub use report::{format_rows, format_table, summarize, ReportRow};
pub use sparse::CsrMatrix;
pub use train::{
    ablate, evaluate, evaluate_on, predict_graph, stratified_split, train, train_model, train_on,
    Split, TrainReport,
};

/// Restoration-quality classes predicted by every model.
pub const NUM_OUTPUTS: usize = 3;
