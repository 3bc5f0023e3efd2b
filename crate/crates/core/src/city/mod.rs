//! City-level road graph: one node per road at its arc-length midpoint,
//! buffered feature aggregation, spatial weights and partial labels.

mod features;
mod geometry;
mod io;
mod weights;

pub use features::{
    aggregate_features, normalize_features, FeatureGroup, FeaturePoint, FeatureSchema,
    DEFAULT_HALF_WIDTH,
};
pub use geometry::{
    arc_midpoint, dist, point_polyline_distance, point_segment_distance, polyline_distance,
    segment_distance, segments_intersect, Point, RoadSegment,
};
pub use io::{
    format_labels, format_roads, parse_feature_points, parse_labels, parse_roads,
    read_bundle, read_feature_points, read_labels, read_roads, write_bundle, write_feature_points,
};
pub(crate) use io::LABELS_KIND;
pub use weights::{
    knn_directed, knn_weights, queen_weights, SpatialWeights, WeightScheme, DEFAULT_K,
    DEFAULT_SNAP,
};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gnn::DenseMatrix;
use crate::{Error, Result};

/// Restoration quality label, ordered low < medium < high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestorationClass {
    Low,
    Medium,
    High,
}

impl RestorationClass {
    pub const ALL: [RestorationClass; 3] = [Self::Low, Self::Medium, Self::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }
}

impl fmt::Display for RestorationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RestorationClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            other => Err(Error::Parse(format!("unknown restoration class {other:?}"))),
        }
    }
}

/// Per-road feature group supplied directly (e.g. street structure vectors)
/// rather than aggregated from located points. Roads without an entry get
/// zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadFeatures {
    pub name: String,
    pub width: usize,
    pub values: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembleOptions {
    pub scheme: WeightScheme,
    pub k: usize,
    pub snap: f64,
    pub half_width: f64,
    pub normalize: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            scheme: WeightScheme::Knn,
            k: DEFAULT_K,
            snap: DEFAULT_SNAP,
            half_width: DEFAULT_HALF_WIDTH,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityGraph {
    road_ids: Vec<String>,
    midpoints: Vec<Point>,
    features: DenseMatrix,
    groups: Vec<FeatureGroup>,
    weights: SpatialWeights,
    labels: Vec<Option<RestorationClass>>,
    coverage: Vec<usize>,
}

impl CityGraph {
    /// Builds a graph from already assembled parts, checking consistency.
    pub fn from_parts(
        road_ids: Vec<String>,
        midpoints: Vec<Point>,
        features: DenseMatrix,
        groups: Vec<FeatureGroup>,
        weights: SpatialWeights,
        labels: Vec<Option<RestorationClass>>,
    ) -> Result<Self> {
        let n = road_ids.len();
        if midpoints.len() != n || features.rows() != n || weights.n() != n || labels.len() != n {
            return Err(Error::Shape(format!(
                "{n} roads, {} midpoints, {} feature rows, {} weight rows, {} labels",
                midpoints.len(),
                features.rows(),
                weights.n(),
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = road_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateRoad(dup.clone()));
        }
        let mut next = 0;
        for g in &groups {
            if g.start != next || g.end <= g.start {
                return Err(Error::Shape(format!("feature group {} does not tile the columns", g.name)));
            }
            next = g.end;
        }
        if next != features.cols() {
            return Err(Error::Shape(format!(
                "feature groups cover {next} of {} columns",
                features.cols()
            )));
        }
        Ok(CityGraph {
            road_ids,
            midpoints,
            features,
            groups,
            weights,
            labels,
            coverage: vec![0; n],
        })
    }

    pub fn n(&self) -> usize {
        self.road_ids.len()
    }

    pub fn road_ids(&self) -> &[String] {
        &self.road_ids
    }

    pub fn midpoints(&self) -> &[Point] {
        &self.midpoints
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn weights(&self) -> &SpatialWeights {
        &self.weights
    }

    pub fn labels(&self) -> &[Option<RestorationClass>] {
        &self.labels
    }

    /// Points that fell inside each road's buffer during assembly.
    pub fn coverage(&self) -> &[usize] {
        &self.coverage
    }

    pub fn label_indices(&self) -> Vec<Option<usize>> {
        self.labels.iter().map(|l| l.map(RestorationClass::index)).collect()
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().flatten().count()
    }

    pub fn index_of(&self, road_id: &str) -> Option<usize> {
        self.road_ids.iter().position(|r| r == road_id)
    }

    pub fn with_weights(&self, weights: SpatialWeights) -> Result<Self> {
        if weights.n() != self.n() {
            return Err(Error::Shape(format!("{} weight rows for {} roads", weights.n(), self.n())));
        }
        Ok(CityGraph {
            weights,
            ..self.clone()
        })
    }

    pub fn with_features(&self, features: DenseMatrix, groups: Vec<FeatureGroup>) -> Result<Self> {
        let mut g = CityGraph::from_parts(
            self.road_ids.clone(),
            self.midpoints.clone(),
            features,
            groups,
            self.weights.clone(),
            self.labels.clone(),
        )?;
        g.coverage = self.coverage.clone();
        Ok(g)
    }

    /// Copy keeping only the named feature groups (in their original order).
    pub fn keep_groups(&self, names: &[&str]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("ablation must keep at least one feature group".into()));
        }
        for name in names {
            if !self.groups.iter().any(|g| g.name == *name) {
                return Err(Error::Config(format!("unknown feature group {name:?}")));
            }
        }
        let mut columns = Vec::new();
        let mut groups = Vec::new();
        for g in self.groups.iter().filter(|g| names.contains(&g.name.as_str())) {
            let start = columns.len();
            columns.extend(g.start..g.end);
            groups.push(FeatureGroup {
                name: g.name.clone(),
                start,
                end: columns.len(),
            });
        }
        self.with_features(self.features.select_columns(&columns)?, groups)
    }
}

fn group_rank(name: &str) -> usize {
    match name {
        "perception" => 0,
        "spatial" => 1,
        "socioeconomic" => 2,
        _ => 3,
    }
}

/// Combines road geometry, buffered point features, per-road feature groups,
/// spatial weights and labels into one graph.
///
/// Groups are ordered perception, spatial, socioeconomic, then any others in
/// the order given. Labels naming an unknown road are an error; roads without
/// a label stay unlabelled.
pub fn assemble_city_graph(
    roads: &[RoadSegment],
    points: &[FeaturePoint],
    schema: &FeatureSchema,
    road_features: &[RoadFeatures],
    labels: &BTreeMap<String, RestorationClass>,
    opts: &AssembleOptions,
) -> Result<CityGraph> {
    let mut seen = HashSet::new();
    for r in roads {
        if !seen.insert(r.road_id.as_str()) {
            return Err(Error::DuplicateRoad(r.road_id.clone()));
        }
    }
    if let Some(unknown) = labels.keys().find(|id| !seen.contains(id.as_str())) {
        return Err(Error::UnknownRoad(unknown.clone()));
    }
    for rf in road_features {
        if let Some(unknown) = rf.values.keys().find(|id| !seen.contains(id.as_str())) {
            return Err(Error::UnknownRoad(unknown.clone()));
        }
        if let Some((id, _)) = rf.values.iter().find(|(_, v)| v.len() != rf.width) {
            return Err(Error::Shape(format!("road {id}: {} vector has wrong width", rf.name)));
        }
    }

    let n = roads.len();
    let midpoints = roads.iter().map(arc_midpoint).collect::<Result<Vec<_>>>()?;
    let point_dim = schema.dim();
    let mut aggregated = Vec::with_capacity(n);
    let mut coverage = Vec::with_capacity(n);
    for road in roads {
        let (v, c) = aggregate_features(road, points, point_dim, opts.half_width)?;
        aggregated.push(v);
        coverage.push(c);
    }

    // (name, width, source): source None = point columns starting at offset.
    enum Source<'a> {
        Points(usize),
        Road(&'a RoadFeatures),
    }
    let mut blocks: Vec<(&str, usize, Source)> = schema
        .groups()
        .iter()
        .map(|g| (g.name.as_str(), g.width(), Source::Points(g.start)))
        .collect();
    for rf in road_features {
        if blocks.iter().any(|b| b.0 == rf.name) {
            return Err(Error::Config(format!("feature group {:?} supplied twice", rf.name)));
        }
        blocks.push((rf.name.as_str(), rf.width, Source::Road(rf)));
    }
    blocks.sort_by_key(|b| group_rank(b.0));

    let dim: usize = blocks.iter().map(|b| b.1).sum();
    let mut x = DenseMatrix::zeros(n, dim);
    let mut groups = Vec::with_capacity(blocks.len());
    let mut col = 0;
    for (name, width, source) in &blocks {
        for (r, road) in roads.iter().enumerate() {
            let dst = &mut x.row_mut(r)[col..col + width];
            match source {
                Source::Points(start) => dst.copy_from_slice(&aggregated[r][*start..start + width]),
                Source::Road(rf) => {
                    if let Some(v) = rf.values.get(&road.road_id) {
                        dst.copy_from_slice(v);
                    }
                }
            }
        }
        groups.push(FeatureGroup {
            name: name.to_string(),
            start: col,
            end: col + width,
        });
        col += width;
    }
    if opts.normalize {
        x = normalize_features(&x)?;
    }

    let road_ids: Vec<String> = roads.iter().map(|r| r.road_id.clone()).collect();
    let weights = match opts.scheme {
        WeightScheme::Knn => knn_weights(&road_ids, &midpoints, opts.k)?,
        WeightScheme::Queen => queen_weights(roads, opts.snap)?,
    };
    let labels = road_ids.iter().map(|id| labels.get(id).copied()).collect();
    let mut graph = CityGraph::from_parts(road_ids, midpoints, x, groups, weights, labels)?;
    graph.coverage = coverage;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_roads() -> Vec<RoadSegment> {
        vec![
            RoadSegment::new("a", vec![(0.0, 0.0), (100.0, 0.0)]).unwrap(),
            RoadSegment::new("b", vec![(100.0, 0.0), (100.0, 100.0)]).unwrap(),
        ]
    }

    #[test]
    fn unlabeled_two_road_graph() {
        let schema = FeatureSchema::new([("perception", 2)]).unwrap();
        let points = vec![
            FeaturePoint { location: (50.0, 1.0), values: vec![1.0, 2.0] },
            FeaturePoint { location: (99.0, 60.0), values: vec![3.0, 0.0] },
        ];
        let opts = AssembleOptions {
            scheme: WeightScheme::Queen,
            ..Default::default()
        };
        let g = assemble_city_graph(&two_roads(), &points, &schema, &[], &BTreeMap::new(), &opts).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.labeled_count(), 0);
        assert_eq!(g.coverage(), &[1, 1]);
        assert!(g.weights().is_adjacent(0, 1));
        assert_eq!(g.features().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn group_order_and_duplicates() {
        let schema = FeatureSchema::new([("socioeconomic", 1), ("perception", 2)]).unwrap();
        let spatial = RoadFeatures {
            name: "spatial".into(),
            width: 5,
            values: BTreeMap::from([("a".to_string(), vec![1.0; 5])]),
        };
        let opts = AssembleOptions {
            scheme: WeightScheme::Queen,
            normalize: false,
            ..Default::default()
        };
        let g = assemble_city_graph(&two_roads(), &[], &schema, &[spatial], &BTreeMap::new(), &opts).unwrap();
        let names: Vec<&str> = g.groups().iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["perception", "spatial", "socioeconomic"]);
        assert_eq!(g.features().cols(), 8);
        assert_eq!(&g.features().row(0)[2..7], &[1.0; 5]);
        assert_eq!(&g.features().row(1)[2..7], &[0.0; 5]);

        let mut roads = two_roads();
        roads[1].road_id = "a".into();
        let err = assemble_city_graph(&roads, &[], &schema, &[], &BTreeMap::new(), &opts).unwrap_err();
        assert!(matches!(err, Error::DuplicateRoad(_)));
    }

    #[test]
    fn labels_must_name_known_roads() {
        let schema = FeatureSchema::new([("perception", 1)]).unwrap();
        let labels = BTreeMap::from([("zz".to_string(), RestorationClass::High)]);
        let opts = AssembleOptions {
            scheme: WeightScheme::Queen,
            ..Default::default()
        };
        assert!(matches!(
            assemble_city_graph(&two_roads(), &[], &schema, &[], &labels, &opts),
            Err(Error::UnknownRoad(_))
        ));
    }

    #[test]
    fn keep_groups_drops_columns() {
        let x = DenseMatrix::zeros(6, 20);
        let groups = vec![
            FeatureGroup { name: "perception".into(), start: 0, end: 10 },
            FeatureGroup { name: "spatial".into(), start: 10, end: 15 },
            FeatureGroup { name: "socioeconomic".into(), start: 15, end: 20 },
        ];
        let ids: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let w = SpatialWeights::from_edges(6, WeightScheme::Knn, [], 0).unwrap();
        let g = CityGraph::from_parts(ids, vec![(0.0, 0.0); 6], x, groups, w, vec![None; 6]).unwrap();
        let kept = g.keep_groups(&["perception", "socioeconomic"]).unwrap();
        assert_eq!(kept.features().cols(), 15);
        assert_eq!(kept.groups()[1].start, 10);
        assert!(g.keep_groups(&[]).is_err());
        assert!(g.keep_groups(&["pixels"]).is_err());
    }
}
