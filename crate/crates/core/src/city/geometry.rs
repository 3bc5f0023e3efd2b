//! Planar polyline geometry in projected metres.

use crate::{Error, Result};

pub type Point = (f64, f64);

/// A road as an ordered polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub road_id: String,
    pub polyline: Vec<Point>,
}

impl RoadSegment {
    pub fn new(road_id: impl Into<String>, polyline: Vec<Point>) -> Result<Self> {
        let road = RoadSegment {
            road_id: road_id.into(),
            polyline,
        };
        road.validate()?;
        Ok(road)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::DegenerateGeometry(format!("road {}: {why}", self.road_id)));
        if self.polyline.len() < 2 {
            return bad("needs at least two vertices");
        }
        if self.polyline.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return bad("non-finite coordinate");
        }
        if self.polyline.windows(2).any(|w| w[0] == w[1]) {
            return bad("repeated consecutive vertex");
        }
        if !(self.length() > 0.0) {
            return bad("zero length");
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.polyline.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.polyline.windows(2).map(|w| (w[0], w[1]))
    }

    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.polyline.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// The point at half the arc length of the polyline.
pub fn arc_midpoint(road: &RoadSegment) -> Result<Point> {
    road.validate()?;
    let half = road.length() / 2.0;
    let mut walked = 0.0;
    for (a, b) in road.segments() {
        let len = dist(a, b);
        if walked + len >= half {
            let t = ((half - walked) / len).clamp(0.0, 1.0);
            return Ok((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
        walked += len;
    }
    Ok(*road.polyline.last().expect("validated polyline"))
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    dist(p, (a.0 + t * dx, a.1 + t * dy))
}

pub fn point_polyline_distance(p: Point, road: &RoadSegment) -> f64 {
    road.segments()
        .map(|(a, b)| point_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Whether closed segments `ab` and `cd` share at least one point.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

pub fn segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

pub fn polyline_distance(r: &RoadSegment, s: &RoadSegment) -> f64 {
    let mut best = f64::INFINITY;
    for (a, b) in r.segments() {
        for (c, d) in s.segments() {
            best = best.min(segment_distance(a, b, c, d));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn road(pts: &[Point]) -> RoadSegment {
        RoadSegment::new("r", pts.to_vec()).unwrap()
    }

    #[test]
    fn midpoint_of_straight_segment() {
        assert_eq!(arc_midpoint(&road(&[(0.0, 0.0), (10.0, 0.0)])).unwrap(), (5.0, 0.0));
    }

    #[test]
    fn midpoint_lands_on_corner() {
        let r = road(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        assert_eq!(arc_midpoint(&r).unwrap(), (4.0, 0.0));
    }

    #[test]
    fn midpoint_matches_dense_resampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point> = (0..5)
            .map(|_| (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)))
            .collect();
        let r = road(&pts);
        // Oracle: resample 10^4 + 1 points uniformly in arc length, take the middle.
        let samples = 10_000;
        let total = r.length();
        let cum: Vec<f64> = std::iter::once(0.0)
            .chain(r.segments().scan(0.0, |acc, (a, b)| {
                *acc += dist(a, b);
                Some(*acc)
            }))
            .collect();
        let at = |s: f64| -> Point {
            let k = cum.windows(2).position(|w| s <= w[1]).unwrap_or(cum.len() - 2);
            let (a, b) = (pts[k], pts[k + 1]);
            let t = (s - cum[k]) / (cum[k + 1] - cum[k]);
            (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
        };
        let resampled: Vec<Point> = (0..=samples).map(|i| at(total * i as f64 / samples as f64)).collect();
        let oracle = resampled[samples / 2];
        let got = arc_midpoint(&r).unwrap();
        assert!(dist(got, oracle) < 1e-6, "{got:?} vs {oracle:?}");
    }

    #[test]
    fn degenerate_roads_are_rejected() {
        assert!(RoadSegment::new("a", vec![(0.0, 0.0)]).is_err());
        assert!(RoadSegment::new("a", vec![(1.0, 1.0), (1.0, 1.0)]).is_err());
        assert!(RoadSegment::new("a", vec![(0.0, 0.0), (f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn segment_relations() {
        // X crossing without a shared vertex
        assert!(segments_intersect((0.0, 0.0), (2.0, 2.0), (0.0, 2.0), (2.0, 0.0)));
        // shared endpoint
        assert!(segments_intersect((0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 5.0)));
        // collinear overlap
        assert!(segments_intersect((0.0, 0.0), (3.0, 0.0), (2.0, 0.0), (5.0, 0.0)));
        // collinear, disjoint
        assert!(!segments_intersect((0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (5.0, 0.0)));
        assert_eq!(segment_distance((0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)), 10.0);
    }

    #[test]
    fn point_distance_to_polyline() {
        let r = road(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]);
        assert_eq!(point_polyline_distance((5.0, 3.0), &r), 3.0);
        assert_eq!(point_polyline_distance((13.0, 5.0), &r), 3.0);
        assert_eq!(point_polyline_distance((-3.0, -4.0), &r), 5.0);
    }
}
