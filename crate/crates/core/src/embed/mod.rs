//! Street structure vectors: a road's merged entity graph is encoded with
//! DeepWalk, propagated through two fixed graph-convolution layers
//! (32 → 32 → 16, ReLU), mean-pooled and projected to 5 values.
//!
//! The propagation and projection weights are Glorot draws from a fixed seed,
//! shared by every road so that vectors live in one common space.

mod deepwalk;

pub use deepwalk::{deepwalk_embed, random_walks, skipgram, WalkConfig};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::entity::EntityGraph;
use crate::format::{self, data_lines, parse_f64};
use crate::gnn::{gcn_forward, normalize_adjacency, Activation, DenseMatrix};
use crate::{Error, Result};

/// Length of a street structure vector.
pub const STREET_DIM: usize = 5;
pub const HIDDEN_WIDTHS: [usize; 2] = [32, 16];

const KIND: &str = "street-vectors";

#[derive(Debug, Clone, PartialEq)]
pub struct StreetStructureVector {
    pub road_id: String,
    pub values: [f64; STREET_DIM],
}

/// The fixed projection applied after DeepWalk.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureProjection {
    pub layer1: DenseMatrix,
    pub layer2: DenseMatrix,
    pub readout: DenseMatrix,
}

impl StructureProjection {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StructureProjection {
            layer1: DenseMatrix::glorot(input_dim, HIDDEN_WIDTHS[0], &mut rng),
            layer2: DenseMatrix::glorot(HIDDEN_WIDTHS[0], HIDDEN_WIDTHS[1], &mut rng),
            readout: DenseMatrix::glorot(HIDDEN_WIDTHS[1], STREET_DIM, &mut rng),
        }
    }

    /// Propagates node features over the graph and returns the pooled vector.
    pub fn apply(&self, features: &DenseMatrix, adjacency: &[Vec<usize>]) -> Result<[f64; STREET_DIM]> {
        if features.rows() == 0 {
            return Err(Error::EmptyGraph);
        }
        let a = normalize_adjacency(adjacency)?;
        let h1 = gcn_forward(features, &a, &self.layer1, Activation::Relu)?;
        let h2 = gcn_forward(&h1, &a, &self.layer2, Activation::Relu)?;
        let mut pooled = h2.column_sums();
        pooled.iter_mut().for_each(|v| *v /= h2.rows() as f64);
        let pooled = DenseMatrix::from_vec(1, pooled.len(), pooled)?;
        let out = pooled.matmul(&self.readout)?;
        let mut values = [0.0; STREET_DIM];
        values.copy_from_slice(out.data());
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("street vector is not finite".into()));
        }
        Ok(values)
    }
}

/// Encodes one road graph. `cfg.seed` drives DeepWalk, `seed` the projection.
pub fn embed_road(road_id: &str, graph: &EntityGraph, cfg: &WalkConfig, seed: u64) -> Result<StreetStructureVector> {
    let embeddings = deepwalk_embed(graph, cfg)?;
    let rows: Vec<Vec<f64>> = embeddings.into_values().collect();
    let features = DenseMatrix::from_rows(&rows)?;
    let projection = StructureProjection::new(cfg.embed_dim, seed);
    Ok(StreetStructureVector {
        road_id: road_id.to_string(),
        values: projection.apply(&features, &graph.adjacency_lists())?,
    })
}

/// Embeds many roads, spreading them over the available cores. Output is in
/// road-id order and independent of the thread count.
pub fn embed_roads(
    graphs: &BTreeMap<String, EntityGraph>,
    cfg: &WalkConfig,
    seed: u64,
) -> Result<Vec<StreetStructureVector>> {
    let items: Vec<(&String, &EntityGraph)> = graphs.iter().collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(threads).max(1);
    let results: Vec<Result<Vec<StreetStructureVector>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|(id, g)| embed_road(id, g, cfg, seed))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("embedding thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// One row per road: `road_id v1 v2 v3 v4 v5`.
pub fn format_street_vectors(vectors: &[StreetStructureVector]) -> String {
    let mut out = format::header_line(KIND);
    for v in vectors {
        out.push_str(&v.road_id);
        for x in &v.values {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_street_vectors(text: &str) -> Result<Vec<StreetStructureVector>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(format::strip_header(text, KIND)?) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != STREET_DIM + 1 {
            return Err(Error::Parse(format!("line {line}: expected road_id and {STREET_DIM} values")));
        }
        let mut values = [0.0; STREET_DIM];
        for (v, tok) in values.iter_mut().zip(&t[1..]) {
            *v = parse_f64(tok, line)?;
        }
        out.push(StreetStructureVector {
            road_id: t[0].to_string(),
            values,
        });
    }
    Ok(out)
}

pub fn write_street_vectors(path: &Path, vectors: &[StreetStructureVector]) -> Result<()> {
    fs::write(path, format_street_vectors(vectors))?;
    Ok(())
}

pub fn read_street_vectors(path: &Path) -> Result<Vec<StreetStructureVector>> {
    parse_street_vectors(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::{build_entity_graph, EntityNode};

    fn cfg() -> WalkConfig {
        WalkConfig {
            walks_per_node: 4,
            walk_length: 12,
            epochs: 2,
            seed: 11,
            ..Default::default()
        }
    }

    fn nodes(spec: &[(u16, f64, f64)]) -> Vec<EntityNode> {
        spec.iter()
            .map(|&(c, x, y)| EntityNode { class_id: c, centroid: (x, y) })
            .collect()
    }

    #[test]
    fn output_has_five_finite_values() {
        let g = build_entity_graph(&nodes(&[(1, 0.0, 0.0), (2, 10.0, 0.0), (3, 200.0, 0.0)]), 45.0).unwrap();
        let v = embed_road("r", &g, &cfg(), 3).unwrap();
        assert_eq!(v.values.len(), STREET_DIM);
        assert!(v.values.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let a = nodes(&[(4, 0.0, 0.0), (9, 10.0, 0.0), (2, 20.0, 5.0), (7, 300.0, 0.0)]);
        let mut b = a.clone();
        b.reverse();
        let ga = build_entity_graph(&a, 45.0).unwrap();
        let gb = build_entity_graph(&b, 45.0).unwrap();
        assert_eq!(embed_road("r", &ga, &cfg(), 1).unwrap(), embed_road("r", &gb, &cfg(), 1).unwrap());
    }

    #[test]
    fn single_node_matches_hand_unrolled_product() {
        let g = build_entity_graph(&nodes(&[(5, 1.0, 1.0)]), 45.0).unwrap();
        let v = embed_road("r", &g, &cfg(), 21).unwrap();
        let e = deepwalk_embed(&g, &cfg()).unwrap()[&5].clone();
        let p = StructureProjection::new(32, 21);
        // Â = [[1]] for a lone node, so each layer is relu(h W).
        let relu_row = |h: &[f64], w: &DenseMatrix| -> Vec<f64> {
            (0..w.cols())
                .map(|j| (0..w.rows()).map(|k| h[k] * w[(k, j)]).sum::<f64>().max(0.0))
                .collect()
        };
        let h1 = relu_row(&e, &p.layer1);
        let h2 = relu_row(&h1, &p.layer2);
        for j in 0..STREET_DIM {
            let expected: f64 = (0..16).map(|k| h2[k] * p.readout[(k, j)]).sum();
            assert!((v.values[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_batch_matches_sequential() {
        let mut graphs = BTreeMap::new();
        for r in 0..6u16 {
            let g = build_entity_graph(&nodes(&[(r, 0.0, 0.0), (r + 10, 30.0, 0.0), (r + 20, 30.0, 30.0)]), 45.0).unwrap();
            graphs.insert(format!("road{r}"), g);
        }
        let batch = embed_roads(&graphs, &cfg(), 5).unwrap();
        for (v, (id, g)) in batch.iter().zip(&graphs) {
            assert_eq!(v, &embed_road(id, g, &cfg(), 5).unwrap());
        }
        let text = format_street_vectors(&batch);
        assert_eq!(parse_street_vectors(&text).unwrap(), batch);
    }

    #[test]
    fn empty_graph_is_rejected() {
        assert!(embed_road("r", &EntityGraph::empty(45.0), &cfg(), 0).is_err());
    }
}
