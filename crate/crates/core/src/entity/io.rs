use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ClassId, EntityGraph, EntityNode, SegmentationMap, NUM_CLASSES};
use crate::format::{self, data_lines, parse_f64, parse_usize};
use crate::{Error, Result};

const RASTER_KIND: &str = "segmentation-raster";
const NODES_KIND: &str = "entity-nodes";
const EDGES_KIND: &str = "entity-edges";

/// Parses a raster: `width height K` then `width * height` class ids, row-major.
pub fn parse_segmentation(text: &str, image_id: &str, road_id: &str) -> Result<SegmentationMap> {
    let body = format::strip_header(text, RASTER_KIND)?;
    let mut tokens = data_lines(body).flat_map(|(line, l)| l.split_whitespace().map(move |t| (line, t)));
    let mut header = |what: &str| -> Result<usize> {
        let (line, tok) = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("raster header is missing {what}")))?;
        parse_usize(tok, line)
    };
    let width = header("width")?;
    let height = header("height")?;
    let k = header("K")?;
    if k != NUM_CLASSES {
        return Err(Error::InvalidSegmentation(format!(
            "raster declares K = {k}, expected {NUM_CLASSES}"
        )));
    }
    let classes = tokens
        .map(|(line, tok)| {
            tok.parse::<ClassId>()
                .map_err(|_| Error::Parse(format!("line {line}: bad class id {tok:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    SegmentationMap::new(width, height, classes, image_id, road_id)
}

pub fn read_segmentation(path: &Path, image_id: &str, road_id: &str) -> Result<SegmentationMap> {
    let text = fs::read_to_string(path)?;
    parse_segmentation(&text, image_id, road_id)
}

pub fn format_segmentation(map: &SegmentationMap) -> String {
    let mut out = format::header_line(RASTER_KIND);
    let _ = writeln!(out, "{} {} {}", map.width, map.height, NUM_CLASSES);
    for row in map.classes.chunks(map.width) {
        let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub road_id: String,
    pub path: PathBuf,
}

/// Reads `image_id,road_id,path` rows; relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (line, l) in data_lines(&text) {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "{}:{line}: expected image_id,road_id,path",
                path.display()
            )));
        }
        if fields[0] == "image_id" {
            continue;
        }
        let p = PathBuf::from(fields[2]);
        out.push(ManifestEntry {
            image_id: fields[0].to_string(),
            road_id: fields[1].to_string(),
            path: if p.is_absolute() { p } else { base.join(p) },
        });
    }
    Ok(out)
}

/// Writes `<stem>.nodes` (`class_id x y`) and `<stem>.edges` (`class_i class_j`).
pub fn write_entity_graph(dir: &Path, stem: &str, graph: &EntityGraph) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut nodes = format::header_line(NODES_KIND);
    let _ = writeln!(nodes, "# threshold {}", graph.threshold());
    for n in graph.nodes() {
        let _ = writeln!(nodes, "{} {} {}", n.class_id, n.centroid.0, n.centroid.1);
    }
    let mut edges = format::header_line(EDGES_KIND);
    for (a, b) in graph.edges() {
        let _ = writeln!(edges, "{a} {b}");
    }
    fs::write(dir.join(format!("{stem}.nodes")), nodes)?;
    fs::write(dir.join(format!("{stem}.edges")), edges)?;
    Ok(())
}

pub fn read_entity_graph(dir: &Path, stem: &str) -> Result<EntityGraph> {
    let nodes_text = fs::read_to_string(dir.join(format!("{stem}.nodes")))?;
    let edges_text = fs::read_to_string(dir.join(format!("{stem}.edges")))?;
    let nodes_body = format::strip_header(&nodes_text, NODES_KIND)?;
    let threshold = nodes_body
        .lines()
        .find_map(|l| l.trim().strip_prefix("# threshold "))
        .map(|t| parse_f64(t.trim(), 0))
        .transpose()?
        .unwrap_or(super::DEFAULT_THRESHOLD);
    let mut nodes = Vec::new();
    for (line, l) in data_lines(nodes_body) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 {
            return Err(Error::Parse(format!("line {line}: expected class_id x y")));
        }
        nodes.push(EntityNode {
            class_id: parse_class(t[0], line)?,
            centroid: (parse_f64(t[1], line)?, parse_f64(t[2], line)?),
        });
    }
    let mut edges = Vec::new();
    for (line, l) in data_lines(format::strip_header(&edges_text, EDGES_KIND)?) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 2 {
            return Err(Error::Parse(format!("line {line}: expected class_i class_j")));
        }
        edges.push((parse_class(t[0], line)?, parse_class(t[1], line)?));
    }
    EntityGraph::from_parts(nodes, edges, threshold)
}

fn parse_class(tok: &str, line: usize) -> Result<ClassId> {
    let v = parse_usize(tok, line)?;
    if v >= NUM_CLASSES {
        return Err(Error::Parse(format!("line {line}: class id {v} out of range")));
    }
    Ok(v as ClassId)
}

/// Class id → display name table. Ids without an entry render as `class_<id>`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassNames {
    names: BTreeMap<ClassId, String>,
}

impl ClassNames {
    /// Parses `id name` lines; the name is the rest of the line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut names = BTreeMap::new();
        for (line, l) in data_lines(text) {
            let (id, name) = l
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Parse(format!("line {line}: expected `id name`")))?;
            names.insert(parse_class(id, line)?, name.trim().to_string());
        }
        Ok(ClassNames { names })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn name(&self, id: ClassId) -> String {
        self.names
            .get(&id)
            .cloned()
            .unwrap_or_else(|| format!("class_{id}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::build_entity_graph;

    #[test]
    fn raster_parse_and_format() {
        let map = parse_segmentation("3 2 150\n0 1 1\n2 2 149\n", "a", "r1").unwrap();
        assert_eq!(map.classes, vec![0, 1, 1, 2, 2, 149]);
        assert_eq!(parse_segmentation(&format_segmentation(&map), "a", "r1").unwrap(), map);
        assert!(parse_segmentation("2 2 150\n0 1 1\n", "a", "r").is_err());
        assert!(parse_segmentation("1 1 100\n0\n", "a", "r").is_err());
    }

    #[test]
    fn graph_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = [
            EntityNode { class_id: 3, centroid: (0.5, 1.25) },
            EntityNode { class_id: 9, centroid: (10.0, 1.0 / 3.0) },
            EntityNode { class_id: 20, centroid: (300.0, 0.0) },
        ];
        let g = build_entity_graph(&nodes, 30.0).unwrap();
        write_entity_graph(dir.path(), "road7", &g).unwrap();
        assert_eq!(read_entity_graph(dir.path(), "road7").unwrap(), g);
        let edges = fs::read_to_string(dir.path().join("road7.edges")).unwrap();
        assert!(edges.ends_with("3 9\n"));
    }

    #[test]
    fn class_names_fall_back() {
        let names = ClassNames::parse("0 wall\n1 building, edifice\n").unwrap();
        assert_eq!(names.name(1), "building, edifice");
        assert_eq!(names.name(42), "class_42");
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.csv");
        fs::write(&p, "image_id,road_id,path\nimg0,r0,rasters/img0.seg\n").unwrap();
        let m = read_manifest(&p).unwrap();
        assert_eq!(m[0].path, dir.path().join("rasters/img0.seg"));
        assert_eq!(m[0].road_id, "r0");
    }
}
