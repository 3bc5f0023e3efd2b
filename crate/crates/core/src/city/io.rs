//! Text formats for roads, feature points and labels, and the on-disk
//! city-graph bundle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{FeatureGroup, FeaturePoint, FeatureSchema};
use super::geometry::RoadSegment;
use super::weights::{SpatialWeights, WeightScheme};
use super::{CityGraph, RestorationClass};
use crate::format::{self, data_lines, parse_f64, parse_usize, VERSION};
use crate::gnn::DenseMatrix;
use crate::{Error, Result};

const ROADS_KIND: &str = "roads";
const POINTS_KIND: &str = "feature-points";
pub(crate) const LABELS_KIND: &str = "road-labels";
const NODES_KIND: &str = "city-nodes";
const ADJ_KIND: &str = "city-adjacency";
const FEATURES_KIND: &str = "city-features";

/// `road_id; x1 y1; x2 y2; ...` per line.
pub fn parse_roads(text: &str) -> Result<Vec<RoadSegment>> {
    let body = format::strip_header(text, ROADS_KIND)?;
    let mut roads = Vec::new();
    for (line, l) in data_lines(body) {
        let mut parts = l.split(';').map(str::trim);
        let id = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| {
            Error::Parse(format!("line {line}: missing road id"))
        })?;
        let mut polyline = Vec::new();
        for part in parts.filter(|p| !p.is_empty()) {
            let xy: Vec<&str> = part.split_whitespace().collect();
            if xy.len() != 2 {
                return Err(Error::Parse(format!("line {line}: vertex {part:?} is not `x y`")));
            }
            polyline.push((parse_f64(xy[0], line)?, parse_f64(xy[1], line)?));
        }
        roads.push(RoadSegment::new(id, polyline)?);
    }
    Ok(roads)
}

pub fn read_roads(path: &Path) -> Result<Vec<RoadSegment>> {
    parse_roads(&fs::read_to_string(path)?)
}

pub fn format_roads(roads: &[RoadSegment]) -> String {
    let mut out = format::header_line(ROADS_KIND);
    for r in roads {
        out.push_str(&r.road_id);
        for (x, y) in &r.polyline {
            let _ = write!(out, "; {x} {y}");
        }
        out.push('\n');
    }
    out
}

/// Header `x y <group>.<column> ...` then one row per point. Columns of a
/// group must be contiguous.
pub fn parse_feature_points(text: &str) -> Result<(FeatureSchema, Vec<FeaturePoint>)> {
    let body = format::strip_header(text, POINTS_KIND)?;
    let mut lines = data_lines(body);
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("feature-points file has no header".into()))?;
    let cols: Vec<&str> = header.split_whitespace().collect();
    if cols.len() < 3 || cols[0] != "x" || cols[1] != "y" {
        return Err(Error::Parse("feature-points header must start with `x y`".into()));
    }
    let mut groups: Vec<(String, usize)> = Vec::new();
    for c in &cols[2..] {
        let name = c.split_once('.').map_or(*c, |(g, _)| g);
        match groups.last_mut() {
            Some((g, w)) if g == name => *w += 1,
            _ => {
                if groups.iter().any(|(g, _)| g == name) {
                    return Err(Error::Parse(format!("columns of group {name:?} are not contiguous")));
                }
                groups.push((name.to_string(), 1));
            }
        }
    }
    let schema = FeatureSchema::new(groups)?;
    let mut points = Vec::new();
    for (line, l) in lines {
        let vals = l
            .split_whitespace()
            .map(|t| parse_f64(t, line))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != cols.len() {
            return Err(Error::Parse(format!(
                "line {line}: {} values for {} columns",
                vals.len(),
                cols.len()
            )));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("line {line}: non-finite value")));
        }
        points.push(FeaturePoint {
            location: (vals[0], vals[1]),
            values: vals[2..].to_vec(),
        });
    }
    Ok((schema, points))
}

pub fn read_feature_points(path: &Path) -> Result<(FeatureSchema, Vec<FeaturePoint>)> {
    parse_feature_points(&fs::read_to_string(path)?)
}

pub fn write_feature_points(path: &Path, schema: &FeatureSchema, points: &[FeaturePoint]) -> Result<()> {
    let mut out = format::header_line(POINTS_KIND);
    out.push_str("x y");
    for g in schema.groups() {
        for i in 0..g.width() {
            let _ = write!(out, " {}.{i}", g.name);
        }
    }
    out.push('\n');
    for p in points {
        let _ = write!(out, "{} {}", p.location.0, p.location.1);
        for v in &p.values {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// `road_id,class` rows; a `road_id,class` header row is skipped. Extra
/// columns (such as a score) are ignored.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, RestorationClass>> {
    let body = format::strip_header(text, LABELS_KIND)?;
    let mut labels = BTreeMap::new();
    for (line, l) in data_lines(body) {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Parse(format!("line {line}: expected road_id,class")));
        }
        if fields[0] == "road_id" {
            continue;
        }
        if labels.insert(fields[0].to_string(), fields[1].parse()?).is_some() {
            return Err(Error::DuplicateRoad(fields[0].to_string()));
        }
    }
    Ok(labels)
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<String, RestorationClass>> {
    parse_labels(&fs::read_to_string(path)?)
}

pub fn format_labels(labels: &BTreeMap<String, RestorationClass>) -> String {
    let mut out = format::header_line(LABELS_KIND);
    for (id, c) in labels {
        let _ = writeln!(out, "{id},{c}");
    }
    out
}

#[derive(Serialize, Deserialize)]
struct FeaturesHeader {
    format: String,
    version: u32,
    rows: usize,
    cols: usize,
    groups: Vec<FeatureGroup>,
}

/// Writes `nodes.txt`, `features.bin`, `adjacency.txt` and `labels.txt`.
pub fn write_bundle(dir: &Path, graph: &CityGraph) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut nodes = format::header_line(NODES_KIND);
    for ((id, (x, y)), c) in graph.road_ids().iter().zip(graph.midpoints()).zip(graph.coverage()) {
        let _ = writeln!(nodes, "{id} {x} {y} {c}");
    }
    fs::write(dir.join("nodes.txt"), nodes)?;

    let header = FeaturesHeader {
        format: FEATURES_KIND.into(),
        version: VERSION,
        rows: graph.features().rows(),
        cols: graph.features().cols(),
        groups: graph.groups().to_vec(),
    };
    let mut bin = serde_json::to_vec(&header)?;
    bin.push(b'\n');
    for v in graph.features().data() {
        bin.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("features.bin"), bin)?;

    let w = graph.weights();
    let mut adj = format::header_line(ADJ_KIND);
    let _ = writeln!(adj, "# scheme {}", w.scheme());
    let _ = writeln!(adj, "# directed_relations {}", w.directed_relation_count());
    for (i, j) in w.edges() {
        let _ = writeln!(adj, "{i} {j}");
    }
    fs::write(dir.join("adjacency.txt"), adj)?;

    let labels: BTreeMap<String, RestorationClass> = graph
        .road_ids()
        .iter()
        .zip(graph.labels())
        .filter_map(|(id, l)| l.map(|c| (id.clone(), c)))
        .collect();
    fs::write(dir.join("labels.txt"), format_labels(&labels))?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<CityGraph> {
    let nodes_text = fs::read_to_string(dir.join("nodes.txt"))?;
    let mut road_ids = Vec::new();
    let mut midpoints = Vec::new();
    let mut coverage = Vec::new();
    for (line, l) in data_lines(format::strip_header(&nodes_text, NODES_KIND)?) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 4 {
            return Err(Error::Parse(format!("nodes.txt line {line}: expected road_id x y coverage")));
        }
        road_ids.push(t[0].to_string());
        midpoints.push((parse_f64(t[1], line)?, parse_f64(t[2], line)?));
        coverage.push(parse_usize(t[3], line)?);
    }

    let bin = fs::read(dir.join("features.bin"))?;
    let nl = bin
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("features.bin has no header".into()))?;
    let header: FeaturesHeader = serde_json::from_slice(&bin[..nl])?;
    if header.format != FEATURES_KIND || header.version != VERSION {
        return Err(Error::Version {
            expected: FEATURES_KIND,
            supported: VERSION,
            found: format!("{} v{}", header.format, header.version),
        });
    }
    let payload = &bin[nl + 1..];
    if payload.len() != header.rows * header.cols * 8 {
        return Err(Error::Parse("features.bin payload size does not match its header".into()));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let features = DenseMatrix::from_vec(header.rows, header.cols, data)?;

    let adj_text = fs::read_to_string(dir.join("adjacency.txt"))?;
    let adj_body = format::strip_header(&adj_text, ADJ_KIND)?;
    let mut scheme = None;
    let mut directed = None;
    for l in adj_body.lines() {
        if let Some(s) = l.trim().strip_prefix("# scheme ") {
            scheme = Some(s.parse::<WeightScheme>()?);
        } else if let Some(s) = l.trim().strip_prefix("# directed_relations ") {
            directed = Some(parse_usize(s.trim(), 0)?);
        }
    }
    let mut edges = Vec::new();
    for (line, l) in data_lines(adj_body) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 2 {
            return Err(Error::Parse(format!("adjacency.txt line {line}: expected `i j`")));
        }
        edges.push((parse_usize(t[0], line)?, parse_usize(t[1], line)?));
    }
    let weights = SpatialWeights::from_edges(
        road_ids.len(),
        scheme.ok_or_else(|| Error::Parse("adjacency.txt does not name its scheme".into()))?,
        edges,
        directed.unwrap_or(0),
    )?;

    let labels_map = read_labels(&dir.join("labels.txt"))?;
    if let Some(unknown) = labels_map.keys().find(|id| !road_ids.contains(id)) {
        return Err(Error::UnknownRoad(unknown.clone()));
    }
    let labels = road_ids.iter().map(|id| labels_map.get(id).copied()).collect();
    let mut graph = CityGraph::from_parts(road_ids, midpoints, features, header.groups, weights, labels)?;
    graph.coverage = coverage;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roads_round_trip() {
        let text = "a; 0 0; 10 0\nb; 10 0; 10 5.5; 12 7\n";
        let roads = parse_roads(text).unwrap();
        assert_eq!(roads[1].polyline, vec![(10.0, 0.0), (10.0, 5.5), (12.0, 7.0)]);
        assert_eq!(parse_roads(&format_roads(&roads)).unwrap(), roads);
        assert!(parse_roads("a; 0 0\n").is_err());
        assert!(parse_roads("a; 0 0; 1\n").is_err());
    }

    #[test]
    fn feature_points_header_defines_groups() {
        let text = "x y perception.0 perception.1 socioeconomic.0\n1 2 0.1 0.2 5\n";
        let (schema, points) = parse_feature_points(text).unwrap();
        assert_eq!(schema.dim(), 3);
        assert_eq!(schema.groups()[1].name, "socioeconomic");
        assert_eq!(points[0].values, vec![0.1, 0.2, 5.0]);
        assert!(parse_feature_points("x y a.0 b.0 a.1\n").is_err());
        assert!(parse_feature_points("x y a.0\n1 2\n").is_err());
    }

    #[test]
    fn labels_parse() {
        let l = parse_labels("road_id,class\nr1,low\nr2, High\n").unwrap();
        assert_eq!(l["r2"], RestorationClass::High);
        assert!(parse_labels("r1,terrible\n").is_err());
        assert!(parse_labels("r1,low\nr1,high\n").is_err());
        assert_eq!(parse_labels(&format_labels(&l)).unwrap(), l);
    }
}
