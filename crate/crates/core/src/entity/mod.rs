//! Street-level entity graphs.
//!
//! Every semantic class present in a segmentation raster becomes one node placed
//! at the centroid of all its pixels. Two classes are joined when their
//! centroids lie strictly closer than a pixel threshold. Graphs of the images
//! along one road are merged into a single road graph.

mod io;

pub use io::{
    format_segmentation, parse_segmentation, read_entity_graph, read_manifest, read_segmentation,
    write_entity_graph, ClassNames,
    ManifestEntry,
};

use std::collections::{BTreeMap, BTreeSet};

use crate::{Error, Result};

/// Size of the semantic class vocabulary.
pub const NUM_CLASSES: usize = 150;

/// Default adjacency threshold in pixels.
pub const DEFAULT_THRESHOLD: f64 = 45.0;

pub type ClassId = u16;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMap {
    pub width: usize,
    pub height: usize,
    /// Row-major class ids, `width * height` entries.
    pub classes: Vec<ClassId>,
    pub image_id: String,
    pub road_id: String,
}

impl SegmentationMap {
    pub fn new(
        width: usize,
        height: usize,
        classes: Vec<ClassId>,
        image_id: impl Into<String>,
        road_id: impl Into<String>,
    ) -> Result<Self> {
        let map = SegmentationMap {
            width,
            height,
            classes,
            image_id: image_id.into(),
            road_id: road_id.into(),
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.classes.is_empty() {
            return Err(Error::EmptySegmentation);
        }
        if self.classes.len() != self.width * self.height {
            return Err(Error::InvalidSegmentation(format!(
                "{}x{} raster holds {} cells",
                self.width,
                self.height,
                self.classes.len()
            )));
        }
        if let Some(bad) = self.classes.iter().find(|&&c| c as usize >= NUM_CLASSES) {
            return Err(Error::InvalidSegmentation(format!(
                "class id {bad} outside [0, {NUM_CLASSES})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityNode {
    pub class_id: ClassId,
    /// Centroid `(x, y)` in pixels; `x` is the column, `y` the row.
    pub centroid: (f64, f64),
}

/// Undirected graph over entity classes, at most one node per class.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityGraph {
    nodes: BTreeMap<ClassId, (f64, f64)>,
    /// Edges stored once with the smaller class id first.
    edges: BTreeSet<(ClassId, ClassId)>,
    threshold: f64,
}

impl EntityGraph {
    pub fn empty(threshold: f64) -> Self {
        EntityGraph {
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            threshold,
        }
    }

    /// Builds a graph from explicit nodes and edges. Edges must reference
    /// existing nodes and may not be self-loops.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = EntityNode>,
        edges: impl IntoIterator<Item = (ClassId, ClassId)>,
        threshold: f64,
    ) -> Result<Self> {
        let mut g = EntityGraph::empty(threshold);
        for n in nodes {
            g.nodes.insert(n.class_id, n.centroid);
        }
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    fn add_edge(&mut self, a: ClassId, b: ClassId) -> Result<()> {
        if a == b {
            return Err(Error::InvalidSegmentation(format!("self-loop on class {a}")));
        }
        for c in [a, b] {
            if !self.nodes.contains_key(&c) {
                return Err(Error::MissingNode(c));
            }
        }
        self.edges.insert((a.min(b), a.max(b)));
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, class_id: ClassId) -> bool {
        self.nodes.contains_key(&class_id)
    }

    /// Nodes in ascending class order.
    pub fn nodes(&self) -> impl Iterator<Item = EntityNode> + '_ {
        self.nodes.iter().map(|(&class_id, &centroid)| EntityNode { class_id, centroid })
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn centroid(&self, class_id: ClassId) -> Option<(f64, f64)> {
        self.nodes.get(&class_id).copied()
    }

    /// Edges as `(smaller, larger)` class pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (ClassId, ClassId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: ClassId, b: ClassId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degree(&self, class_id: ClassId) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == class_id || b == class_id)
            .count()
    }

    /// Neighbour lists indexed by position in [`EntityGraph::class_ids`] order.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let index: BTreeMap<ClassId, usize> =
            self.nodes.keys().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            let (i, j) = (index[&a], index[&b]);
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

/// One node per class id present in the raster, at the mean pixel coordinate of
/// all pixels carrying that id (disconnected regions are pooled).
pub fn compute_class_centroids(map: &SegmentationMap) -> Result<Vec<EntityNode>> {
    map.validate()?;
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); NUM_CLASSES];
    for (idx, &class) in map.classes.iter().enumerate() {
        let (x, y) = (idx % map.width, idx / map.width);
        let s = &mut sums[class as usize];
        s.0 += x as f64;
        s.1 += y as f64;
        s.2 += 1;
    }
    Ok(sums
        .iter()
        .enumerate()
        .filter(|(_, s)| s.2 > 0)
        .map(|(class, &(sx, sy, n))| EntityNode {
            class_id: class as ClassId,
            centroid: (sx / n as f64, sy / n as f64),
        })
        .collect())
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Connects every pair of nodes whose centroid distance is strictly below
/// `threshold`.
pub fn build_entity_graph(nodes: &[EntityNode], threshold: f64) -> Result<EntityGraph> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {threshold}")));
    }
    let mut g = EntityGraph::empty(threshold);
    for n in nodes {
        if g.nodes.insert(n.class_id, n.centroid).is_some() {
            return Err(Error::InvalidSegmentation(format!(
                "class {} appears twice in the node set",
                n.class_id
            )));
        }
    }
    let ordered: Vec<EntityNode> = g.nodes().collect();
    for (i, a) in ordered.iter().enumerate() {
        for b in &ordered[i + 1..] {
            if distance(a.centroid, b.centroid) < threshold {
                g.edges.insert((a.class_id, b.class_id));
            }
        }
    }
    Ok(g)
}

/// Convenience: centroids then thresholded graph for one raster.
pub fn graph_from_segmentation(map: &SegmentationMap, threshold: f64) -> Result<EntityGraph> {
    build_entity_graph(&compute_class_centroids(map)?, threshold)
}

/// Union of per-image graphs of one road. A class present in several images is
/// placed at the unweighted mean of its per-image centroids.
pub fn merge_road_graphs<'a, I>(graphs: I) -> Result<EntityGraph>
where
    I: IntoIterator<Item = &'a EntityGraph>,
{
    let mut iter = graphs.into_iter().peekable();
    let threshold = iter.peek().ok_or(Error::NoImages)?.threshold;
    let mut sums: BTreeMap<ClassId, (f64, f64, usize)> = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for g in iter {
        if g.threshold != threshold {
            return Err(Error::Config(format!(
                "cannot merge graphs built with thresholds {threshold} and {}",
                g.threshold
            )));
        }
        for (&c, &(x, y)) in &g.nodes {
            let s = sums.entry(c).or_insert((0.0, 0.0, 0));
            s.0 += x;
            s.1 += y;
            s.2 += 1;
        }
        edges.extend(g.edges.iter().copied());
    }
    let nodes = sums
        .into_iter()
        .map(|(c, (sx, sy, n))| (c, (sx / n as f64, sy / n as f64)))
        .collect();
    Ok(EntityGraph {
        nodes,
        edges,
        threshold,
    })
}

/// Degree divided by `n - 1`.
pub fn degree_centrality(graph: &EntityGraph, class_id: ClassId) -> Result<f64> {
    let n = graph.node_count();
    if n < 2 {
        return Err(Error::CentralityUndefined(n));
    }
    if !graph.contains(class_id) {
        return Err(Error::MissingNode(class_id));
    }
    Ok(graph.degree(class_id) as f64 / (n - 1) as f64)
}

/// The `k` most central classes, descending, ties by ascending class id.
///
/// A single-node graph reports its node with centrality 0.
pub fn top_centrality(graph: &EntityGraph, k: usize) -> Result<Vec<(ClassId, f64)>> {
    if k == 0 {
        return Err(Error::Config("top_centrality needs k >= 1".into()));
    }
    let n = graph.node_count();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut degree: BTreeMap<ClassId, usize> = graph.class_ids().map(|c| (c, 0)).collect();
    for (a, b) in graph.edges() {
        *degree.get_mut(&a).unwrap() += 1;
        *degree.get_mut(&b).unwrap() += 1;
    }
    let denom = (n.max(2) - 1) as f64;
    let mut ranked: Vec<(ClassId, f64)> = degree
        .into_iter()
        .map(|(c, d)| (c, d as f64 / denom))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}
