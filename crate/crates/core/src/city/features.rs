use super::geometry::{point_polyline_distance, Point, RoadSegment};
use crate::gnn::DenseMatrix;
use crate::{Error, Result};

/// Buffer half-width around each road, in metres.
pub const DEFAULT_HALF_WIDTH: f64 = 25.0;

/// A located feature sample; `values` concatenates the groups of the
/// dataset's [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePoint {
    pub location: Point,
    pub values: Vec<f64>,
}

/// A named, contiguous column range of the feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

impl FeatureGroup {
    pub fn width(&self) -> usize {
        self.end - self.start
    }
}

/// Ordered feature groups and their widths.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureSchema {
    groups: Vec<FeatureGroup>,
}

impl FeatureSchema {
    pub fn new<S: Into<String>>(groups: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut schema = FeatureSchema::default();
        for (name, width) in groups {
            schema.push(name, width)?;
        }
        Ok(schema)
    }

    pub fn push(&mut self, name: impl Into<String>, width: usize) -> Result<()> {
        let name = name.into();
        if width == 0 || name.is_empty() {
            return Err(Error::Config(format!("feature group {name:?} must be named and nonempty")));
        }
        if self.groups.iter().any(|g| g.name == name) {
            return Err(Error::Config(format!("feature group {name:?} declared twice")));
        }
        let start = self.dim();
        self.groups.push(FeatureGroup {
            name,
            start,
            end: start + width,
        });
        Ok(())
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.groups.last().map_or(0, |g| g.end)
    }
}

/// Mean feature vector of the points within `half_width` of the road, and how
/// many points contributed. No coverage gives a zero vector.
pub fn aggregate_features(
    road: &RoadSegment,
    points: &[FeaturePoint],
    dim: usize,
    half_width: f64,
) -> Result<(Vec<f64>, usize)> {
    if !(half_width > 0.0) {
        return Err(Error::Config(format!("buffer half-width must be positive, got {half_width}")));
    }
    let mut sum = vec![0.0; dim];
    let mut covered = 0;
    for p in points {
        if p.values.len() != dim {
            return Err(Error::Shape(format!(
                "feature point has {} values, schema has {dim}",
                p.values.len()
            )));
        }
        if point_polyline_distance(p.location, road) <= half_width {
            for (s, v) in sum.iter_mut().zip(&p.values) {
                *s += v;
            }
            covered += 1;
        }
    }
    if covered > 0 {
        sum.iter_mut().for_each(|s| *s /= covered as f64);
    }
    Ok((sum, covered))
}

/// Per-column min-max scaling to `[0, 1]`; constant columns become 0.
pub fn normalize_features(x: &DenseMatrix) -> Result<DenseMatrix> {
    if !x.is_finite() {
        return Err(Error::Numeric("feature matrix has non-finite entries".into()));
    }
    let mut out = x.clone();
    for c in 0..x.cols() {
        let (lo, hi) = (0..x.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(x[(r, c)]), hi.max(x[(r, c)]))
        });
        let span = hi - lo;
        for r in 0..x.rows() {
            out[(r, c)] = if span > 0.0 { (x[(r, c)] - lo) / span } else { 0.0 };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> RoadSegment {
        RoadSegment::new("r", vec![(0.0, 0.0), (100.0, 0.0)]).unwrap()
    }

    fn pt(x: f64, y: f64, v: &[f64]) -> FeaturePoint {
        FeaturePoint {
            location: (x, y),
            values: v.to_vec(),
        }
    }

    #[test]
    fn point_on_line_is_taken_as_is() {
        let (v, n) = aggregate_features(&line(), &[pt(50.0, 0.0, &[1.0, 2.0])], 2, 25.0).unwrap();
        assert_eq!((v, n), (vec![1.0, 2.0], 1));
    }

    #[test]
    fn two_points_average() {
        let pts = [pt(10.0, 5.0, &[1.0, 4.0]), pt(20.0, -5.0, &[3.0, 0.0])];
        let (v, n) = aggregate_features(&line(), &pts, 2, 25.0).unwrap();
        assert_eq!((v, n), (vec![2.0, 2.0], 2));
    }

    #[test]
    fn buffer_boundary_is_inclusive() {
        let pts = [pt(50.0, 25.01, &[9.0]), pt(50.0, 25.0, &[1.0])];
        let (v, n) = aggregate_features(&line(), &pts, 1, 25.0).unwrap();
        assert_eq!((v, n), (vec![1.0], 1));
        let (v, n) = aggregate_features(&line(), &pts[..1], 1, 25.0).unwrap();
        assert_eq!((v, n), (vec![0.0], 0));
    }

    #[test]
    fn min_max_columns() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 3.0], vec![5.0, 3.0], vec![10.0, 3.0]]).unwrap();
        let n = normalize_features(&x).unwrap();
        assert_eq!(n.data(), &[0.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn schema_spans_partition_columns() {
        let s = FeatureSchema::new([("perception", 4), ("socioeconomic", 3)]).unwrap();
        assert_eq!(s.dim(), 7);
        assert_eq!(s.groups()[1].start, 4);
        assert!(FeatureSchema::new([("a", 1), ("a", 2)]).is_err());
    }
}
