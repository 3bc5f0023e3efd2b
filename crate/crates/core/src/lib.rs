//! Spatial-dependent graph toolkit for predicting the psychological restoration
//! quality of urban roads.
//!
//! The crate is organised along the pipeline:
//!
//! * [`entity`] builds street-level graphs of semantic scene entities from
//!   segmentation rasters and reports degree centrality.
//! * [`embed`] turns a road's entity graph into a 5-dimensional structure vector
//!   (DeepWalk followed by two graph-convolution propagation layers).
//! * [`city`] assembles the city-level road graph: arc-length midpoints, buffered
//!   feature aggregation, K-nearest / queen-contiguity weights.
//! * [`gnn`] is a small dense/sparse linear algebra core with GCN, GAT, GraphSAGE
//!   and MLP layers, analytic backpropagation and a semi-supervised trainer.
//! * [`labeling`] runs the pairwise rating workflow (TrueSkill, Jenks breaks).
//! * [`analysis`] holds K-Means with silhouette selection and structure reports.

pub mod analysis;
pub mod city;
pub mod embed;
pub mod entity;
mod error;
pub mod format;
pub mod gnn;
pub mod labeling;

pub use error::{Error, Result};
