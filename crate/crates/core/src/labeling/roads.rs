use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::jenks::jenks_breaks;
use crate::city::{point_polyline_distance, Point, RestorationClass, RoadSegment, LABELS_KIND};
use crate::format::{self, data_lines, parse_f64};
use crate::{Error, Result};

/// A rated image at its capture location.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPoint {
    pub image_id: String,
    pub location: Point,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadLabel {
    pub class: RestorationClass,
    pub score: f64,
    /// Scored points inside the road's buffer.
    pub points: usize,
}

/// Per-road classes and the two break values that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub thresholds: [f64; 2],
    pub roads: BTreeMap<String, RoadLabel>,
}

impl LabelSet {
    pub fn classes(&self) -> BTreeMap<String, RestorationClass> {
        self.roads.iter().map(|(id, l)| (id.clone(), l.class)).collect()
    }

    /// Road counts per class, low to high.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for l in self.roads.values() {
            counts[l.class.index()] += 1;
        }
        counts
    }
}

/// Scores every road by the mean score of the points within `half_width`
/// of it and cuts the road scores into low/medium/high with Jenks breaks.
/// A point can count for several roads. Roads without points stay unlabeled.
pub fn label_roads(points: &[ScoredPoint], roads: &[RoadSegment], half_width: f64) -> Result<LabelSet> {
    if points.is_empty() {
        return Err(Error::Config("no scored points to label roads with".into()));
    }
    if !(half_width >= 0.0) {
        return Err(Error::Config(format!("buffer half-width must be >= 0, got {half_width}")));
    }
    let mut road_scores: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for road in roads {
        road.validate()?;
        let (x0, y0, x1, y1) = road.bounds();
        let (mut sum, mut count) = (0.0, 0usize);
        for p in points {
            let (x, y) = p.location;
            if x < x0 - half_width || x > x1 + half_width || y < y0 - half_width || y > y1 + half_width {
                continue;
            }
            if point_polyline_distance(p.location, road) <= half_width {
                sum += p.score;
                count += 1;
            }
        }
        if count > 0 {
            if road_scores.insert(road.road_id.clone(), (sum / count as f64, count)).is_some() {
                return Err(Error::DuplicateRoad(road.road_id.clone()));
            }
        }
    }
    if road_scores.is_empty() {
        return Err(Error::Config("no road has a scored point within its buffer".into()));
    }
    let values: Vec<f64> = road_scores.values().map(|&(s, _)| s).collect();
    let breaks = jenks_breaks(&values, 3)?;
    let roads = road_scores
        .into_iter()
        .zip(&breaks.classes)
        .map(|((id, (score, points)), &c)| {
            let class = RestorationClass::from_index(c).expect("three classes");
            (id, RoadLabel { class, score, points })
        })
        .collect();
    Ok(LabelSet { thresholds: [breaks.thresholds[0], breaks.thresholds[1]], roads })
}

/// `road_id,class,score` rows after a `# breaks a b` line.
pub fn format_label_set(set: &LabelSet) -> String {
    let mut out = format::header_line(LABELS_KIND);
    let _ = writeln!(out, "# breaks {} {}", set.thresholds[0], set.thresholds[1]);
    out.push_str("road_id,class,score\n");
    for (id, l) in &set.roads {
        let _ = writeln!(out, "{id},{},{}", l.class, l.score);
    }
    out
}

pub fn parse_label_set(text: &str) -> Result<LabelSet> {
    let body = format::strip_header(text, LABELS_KIND)?;
    let mut thresholds = None;
    for l in body.lines() {
        if let Some(rest) = l.trim().strip_prefix("# breaks") {
            let v: Vec<&str> = rest.split_whitespace().collect();
            if v.len() != 2 {
                return Err(Error::Parse(format!("breaks line needs two values: {l:?}")));
            }
            thresholds = Some([parse_f64(v[0], 0)?, parse_f64(v[1], 0)?]);
        }
    }
    let thresholds = thresholds.ok_or_else(|| Error::Parse("label set has no breaks line".into()))?;
    let mut roads = BTreeMap::new();
    for (line, l) in data_lines(body) {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f[0] == "road_id" {
            continue;
        }
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {line}: expected road_id,class,score")));
        }
        let label = RoadLabel { class: f[1].parse()?, score: parse_f64(f[2], line)?, points: 0 };
        if roads.insert(f[0].to_string(), label).is_some() {
            return Err(Error::DuplicateRoad(f[0].to_string()));
        }
    }
    Ok(LabelSet { thresholds, roads })
}

pub fn write_label_set(path: &Path, set: &LabelSet) -> Result<()> {
    fs::write(path, format_label_set(set))?;
    Ok(())
}

/// One row of the image manifest `image_id,path,x,y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub image_id: String,
    pub path: PathBuf,
    pub location: Point,
}

/// Parses an image manifest; relative paths are resolved against `base`.
/// A header row starting with `image_id` is skipped.
pub fn parse_image_manifest(text: &str, base: &Path) -> Result<Vec<ImageEntry>> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, l) in data_lines(text) {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f[0] == "image_id" {
            continue;
        }
        if f.len() != 4 {
            return Err(Error::Parse(format!("line {line}: expected image_id,path,x,y")));
        }
        if !seen.insert(f[0].to_string()) {
            return Err(Error::Parse(format!("line {line}: duplicate image id {}", f[0])));
        }
        let p = Path::new(f[1]);
        out.push(ImageEntry {
            image_id: f[0].to_string(),
            path: if p.is_absolute() { p.to_path_buf() } else { base.join(p) },
            location: (parse_f64(f[2], line)?, parse_f64(f[3], line)?),
        });
    }
    Ok(out)
}

pub fn read_image_manifest(path: &Path) -> Result<Vec<ImageEntry>> {
    let text = fs::read_to_string(path)?;
    parse_image_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}
