//! DeepWalk: truncated uniform random walks fed to skip-gram with negative
//! sampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entity::{ClassId, EntityGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Co-occurrence radius on each side of the centre.
    pub window: usize,
    pub embed_dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial skip-gram learning rate, decayed linearly towards zero.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 40,
            window: 5,
            embed_dim: 32,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("walk config: {name} must be at least 1")));
        }
        if self.embed_dim < 2 {
            return Err(Error::Config("walk config: embed_dim must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("walk config: learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// `walks_per_node` rounds; each round starts one walk from every node in a
/// freshly shuffled order. Walks stop early at nodes without neighbours.
pub fn random_walks<R: Rng>(
    adjacency: &[Vec<usize>],
    walks_per_node: usize,
    walk_length: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut starts: Vec<usize> = (0..adjacency.len()).collect();
    let mut walks = Vec::with_capacity(walks_per_node * adjacency.len());
    for _ in 0..walks_per_node {
        starts.shuffle(rng);
        for &s in &starts {
            let mut walk = Vec::with_capacity(walk_length);
            walk.push(s);
            while walk.len() < walk_length {
                let cur = *walk.last().expect("walk is nonempty");
                let Some(&next) = adjacency[cur].choose(rng) else {
                    break;
                };
                walk.push(next);
            }
            walks.push(walk);
        }
    }
    walks
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cumulative unigram^0.75 distribution over walk occurrences.
struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(walks: &[Vec<usize>], n: usize) -> Self {
        let mut counts = vec![0usize; n];
        for &v in walks.iter().flatten() {
            counts[v] += 1;
        }
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeTable { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty table");
        let r = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= r).min(self.cumulative.len() - 1)
    }
}

/// Skip-gram embeddings over walks on `adjacency`; rows follow node index.
pub fn skipgram(adjacency: &[Vec<usize>], cfg: &WalkConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let n = adjacency.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.embed_dim;
    let mut input: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| (rng.gen::<f64>() - 0.5) / d as f64).collect())
        .collect();
    let mut output = vec![vec![0.0; d]; n];

    let walks = random_walks(adjacency, cfg.walks_per_node, cfg.walk_length, &mut rng);
    let table = NegativeTable::new(&walks, n);
    let positions: usize = walks.iter().map(Vec::len).sum();
    let total_steps = (positions * cfg.epochs).max(1) as f64;
    let floor = cfg.learning_rate * 1e-4;
    let mut step = 0usize;
    let mut err = vec![0.0; d];
    for _ in 0..cfg.epochs {
        for walk in &walks {
            for (i, &center) in walk.iter().enumerate() {
                let lr = (cfg.learning_rate * (1.0 - step as f64 / total_steps)).max(floor);
                step += 1;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(walk.len());
                for (j, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    err.iter_mut().for_each(|e| *e = 0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = table.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let score: f64 = input[center].iter().zip(&output[target]).map(|(a, b)| a * b).sum();
                        let g = (label - sigmoid(score)) * lr;
                        for ((e, o), x) in err.iter_mut().zip(output[target].iter_mut()).zip(&input[center]) {
                            *e += g * *o;
                            *o += g * x;
                        }
                    }
                    for (x, e) in input[center].iter_mut().zip(&err) {
                        *x += e;
                    }
                }
            }
        }
    }
    if input.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("skip-gram produced non-finite embeddings".into()));
    }
    Ok(input)
}

/// DeepWalk vectors per entity class.
pub fn deepwalk_embed(graph: &EntityGraph, cfg: &WalkConfig) -> Result<BTreeMap<ClassId, Vec<f64>>> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let vectors = skipgram(&graph.adjacency_lists(), cfg)?;
    Ok(graph.class_ids().zip(vectors).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityNode;

    fn graph(n: u16, edges: &[(u16, u16)]) -> EntityGraph {
        let nodes = (0..n).map(|c| EntityNode {
            class_id: c,
            centroid: (0.0, 0.0),
        });
        EntityGraph::from_parts(nodes, edges.iter().copied(), 45.0).unwrap()
    }

    fn small_cfg(seed: u64) -> WalkConfig {
        WalkConfig {
            walks_per_node: 5,
            walk_length: 10,
            epochs: 2,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn single_node_keeps_initial_vector() {
        let g = graph(1, &[]);
        let walks = random_walks(&g.adjacency_lists(), 3, 10, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(walks.iter().all(|w| w == &vec![0]));
        let e = deepwalk_embed(&g, &small_cfg(1)).unwrap();
        assert_eq!(e[&0].len(), 32);
        assert!(e[&0].iter().all(|v| v.is_finite()));
        // no context pairs -> the vector is exactly its initialisation
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init: Vec<f64> = (0..32).map(|_| (rng.gen::<f64>() - 0.5) / 32.0).collect();
        assert_eq!(e[&0], init);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let g = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]);
        let a = deepwalk_embed(&g, &small_cfg(7)).unwrap();
        let b = deepwalk_embed(&g, &small_cfg(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, deepwalk_embed(&g, &small_cfg(8)).unwrap());
    }

    #[test]
    fn walks_follow_edges() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let adj = g.adjacency_lists();
        let walks = random_walks(&adj, 4, 12, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(walks.len(), 16);
        for w in &walks {
            assert_eq!(w.len(), 12);
            assert!(w.windows(2).all(|p| adj[p[0]].contains(&p[1])));
        }
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn barbell_cliques_cluster_together() {
        // two 5-cliques {0..4} and {7..11} joined by the path 4-5-6-7
        let mut edges = Vec::new();
        for base in [0u16, 7] {
            for a in base..base + 5 {
                for b in a + 1..base + 5 {
                    edges.push((a, b));
                }
            }
        }
        edges.extend([(4, 5), (5, 6), (6, 7)]);
        let g = graph(12, &edges);
        let (mut intra, mut cross) = (0.0, 0.0);
        for seed in 0..10 {
            let e = deepwalk_embed(&g, &WalkConfig { seed, ..Default::default() }).unwrap();
            let left: Vec<u16> = (0..4).collect();
            let right: Vec<u16> = (8..12).collect();
            let mut s_in = Vec::new();
            let mut s_x = Vec::new();
            for side in [&left, &right] {
                for (i, &a) in side.iter().enumerate() {
                    for &b in &side[i + 1..] {
                        s_in.push(cosine(&e[&a], &e[&b]));
                    }
                }
            }
            for &a in &left {
                for &b in &right {
                    s_x.push(cosine(&e[&a], &e[&b]));
                }
            }
            intra += s_in.iter().sum::<f64>() / s_in.len() as f64;
            cross += s_x.iter().sum::<f64>() / s_x.len() as f64;
        }
        assert!(intra > cross, "intra {intra} <= cross {cross}");
    }

    #[test]
    fn empty_graph_and_bad_config() {
        assert!(matches!(
            deepwalk_embed(&EntityGraph::empty(45.0), &WalkConfig::default()),
            Err(Error::EmptyGraph)
        ));
        let g = graph(2, &[(0, 1)]);
        let cfg = WalkConfig { embed_dim: 1, ..Default::default() };
        assert!(deepwalk_embed(&g, &cfg).is_err());
    }
}
