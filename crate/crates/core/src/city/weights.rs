//! Spatial weight matrices over road nodes, stored as symmetric neighbour lists.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geometry::{dist, polyline_distance, Point, RoadSegment};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;
/// Snap tolerance for queen contiguity, in metres.
pub const DEFAULT_SNAP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    Knn,
    Queen,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::Knn => "knn",
            WeightScheme::Queen => "queen",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" | "k-nearest" => Ok(WeightScheme::Knn),
            "queen" => Ok(WeightScheme::Queen),
            other => Err(Error::Config(format!("unknown weight scheme {other:?}"))),
        }
    }
}

/// Symmetric, zero-diagonal boolean adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialWeights {
    scheme: WeightScheme,
    neighbors: Vec<Vec<usize>>,
    /// KNN: `n * K` directed `i -> j` relations before symmetrisation.
    /// Queen: number of nonzero entries of the symmetric matrix.
    directed_relation_count: usize,
}

impl SpatialWeights {
    /// Builds from undirected edges; duplicates collapse.
    pub fn from_edges(
        n: usize,
        scheme: WeightScheme,
        edges: impl IntoIterator<Item = (usize, usize)>,
        directed_relation_count: usize,
    ) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::Shape(format!("invalid edge ({a}, {b}) for {n} nodes")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(SpatialWeights {
            scheme,
            neighbors,
            directed_relation_count,
        })
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn directed_relation_count(&self) -> usize {
        self.directed_relation_count
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Undirected edges `(i, j)` with `i < j`, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Nodes with no neighbour at all.
    pub fn isolated(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.neighbors[i].is_empty()).collect()
    }
}

/// Each node points at its `k` nearest midpoints (ties by ascending road id);
/// the adjacency is the union of both directions.
pub fn knn_weights(road_ids: &[String], midpoints: &[Point], k: usize) -> Result<SpatialWeights> {
    let directed = knn_directed(road_ids, midpoints, k)?;
    let n = directed.len();
    let edges = directed
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.iter().map(move |&j| (i, j)));
    SpatialWeights::from_edges(n, WeightScheme::Knn, edges, n * k)
}

/// The `k` nearest other nodes of every node, nearest first.
pub fn knn_directed(road_ids: &[String], midpoints: &[Point], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = midpoints.len();
    if road_ids.len() != n {
        return Err(Error::Shape(format!("{} ids for {n} midpoints", road_ids.len())));
    }
    if k == 0 || n <= k {
        return Err(Error::TooFewPoints(format!("K-nearest weights need n > K, got n = {n}, K = {k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| road_ids[a].cmp(&road_ids[b]));
    let mut id_rank = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        id_rank[i] = rank;
    }
    if let Some(i) = midpoints.iter().position(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::Shape(format!("midpoint of road {} is not finite", road_ids[i])));
    }
    // sweep outwards along x from each node; a candidate further away in x
    // alone than the current k-th best cannot enter the list
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| midpoints[a].0.total_cmp(&midpoints[b].0).then(a.cmp(&b)));
    let mut pos = vec![0usize; n];
    for (p, &i) in by_x.iter().enumerate() {
        pos[i] = p;
    }
    let key = |d: f64, j: usize| (d, id_rank[j]);
    let before = |a: (f64, usize), b: (f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) == Ordering::Less;
    let mut out = Vec::with_capacity(n);
    let mut best: Vec<(f64, usize, usize)> = Vec::with_capacity(k + 1);
    for i in 0..n {
        best.clear();
        let xi = midpoints[i].0;
        let (mut lo, mut hi) = (pos[i], pos[i] + 1);
        loop {
            let bound = if best.len() == k { best[k - 1].0 } else { f64::INFINITY };
            let left = (lo > 0).then(|| xi - midpoints[by_x[lo - 1]].0).filter(|&dx| dx <= bound);
            let right = (hi < n).then(|| midpoints[by_x[hi]].0 - xi).filter(|&dx| dx <= bound);
            let j = match (left, right) {
                (None, None) => break,
                (Some(l), Some(r)) if r < l => {
                    hi += 1;
                    by_x[hi - 1]
                }
                (Some(_), _) => {
                    lo -= 1;
                    by_x[lo]
                }
                (None, Some(_)) => {
                    hi += 1;
                    by_x[hi - 1]
                }
            };
            let d = dist(midpoints[i], midpoints[j]);
            let cand = key(d, j);
            if best.len() == k && !before(cand, (best[k - 1].0, best[k - 1].1)) {
                continue;
            }
            let at = best.partition_point(|&(bd, br, _)| before((bd, br), cand));
            best.insert(at, (d, cand.1, j));
            best.truncate(k);
        }
        out.push(best.iter().map(|&(_, _, j)| j).collect());
    }
    Ok(out)
}

/// Roads are neighbours when their polylines intersect, touch, or pass within
/// `snap` metres of each other.
pub fn queen_weights(roads: &[RoadSegment], snap: f64) -> Result<SpatialWeights> {
    if roads.len() < 2 {
        return Err(Error::TooFewPoints("queen contiguity needs at least two roads".into()));
    }
    if !(snap >= 0.0) {
        return Err(Error::Config(format!("snap tolerance must be non-negative, got {snap}")));
    }
    for r in roads {
        r.validate()?;
    }
    let bounds: Vec<(f64, f64, f64, f64)> = roads.iter().map(RoadSegment::bounds).collect();
    let mut order: Vec<usize> = (0..roads.len()).collect();
    order.sort_by(|&a, &b| bounds[a].0.total_cmp(&bounds[b].0).then(a.cmp(&b)));
    let mut edges = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let bi = bounds[i];
        for &j in &order[pos + 1..] {
            let bj = bounds[j];
            if bj.0 > bi.2 + snap {
                break;
            }
            if bj.1 > bi.3 + snap || bi.1 > bj.3 + snap {
                continue;
            }
            if polyline_distance(&roads[i], &roads[j]) <= snap {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    let count = 2 * edges.len();
    SpatialWeights::from_edges(roads.len(), WeightScheme::Queen, edges, count)
}
