//! Synthetic datasets with a planted three-class label.
//!
//! Roads are segments of a square street grid (100 m blocks). Labels are
//! tertiles of a smooth random field over the plane, so neighbouring roads
//! tend to share a class, or tertiles of independent noise when
//! autocorrelation is off. Each road gets
//!
//! * feature points in its buffer: a `perception` group whose column
//!   `j` is shifted by `signal` when `j % 3` equals the class, and a
//!   `socioeconomic` group of pure noise;
//! * segmentation rasters whose entity layout follows a class template
//!   (compact natural scenes for high, scattered built scenes for low) with
//!   probability `structure_signal`, and a random template otherwise;
//! * an SVG rendering of each raster for the rating service.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use restograph::city::{format_labels, format_roads, write_feature_points, FeaturePoint, FeatureSchema, RestorationClass, RoadSegment};
use restograph::entity::{format_segmentation, SegmentationMap};

use crate::error::CliError;

pub const BLOCK: f64 = 100.0;
pub const RASTER_WIDTH: usize = 64;
pub const RASTER_HEIGHT: usize = 48;
pub const PERCEPTION_COLUMNS: usize = 6;
pub const SOCIOECONOMIC_COLUMNS: usize = 4;

const SKY: u16 = 2;
const SIDEWALK: u16 = 11;
const TEMPLATES: [&[u16]; 3] = [
    &[1, 6, 20, 0, 43, 93, 32],
    &[1, 4, 6, 12, 9, 20, 17],
    &[4, 9, 17, 21, 66, 12, 29],
];
const CLASS_NAMES: &[(u16, &str)] = &[
    (0, "wall"),
    (1, "building"),
    (2, "sky"),
    (4, "tree"),
    (6, "road"),
    (9, "grass"),
    (11, "sidewalk"),
    (12, "person"),
    (17, "plant"),
    (20, "car"),
    (21, "water"),
    (29, "field"),
    (32, "fence"),
    (43, "signboard"),
    (66, "flower"),
    (93, "pole"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub roads: usize,
    pub signal: f64,
    /// Probability that a road's scenes follow its own class template.
    pub structure_signal: f64,
    pub autocorrelated: bool,
    pub images_per_road: usize,
    pub points_per_road: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            roads: 10,
            signal: 1.0,
            structure_signal: 0.8,
            autocorrelated: true,
            images_per_road: 2,
            points_per_road: 3,
            seed: 0,
        }
    }
}

/// What a generated dataset contains.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub roads: Vec<RoadSegment>,
    pub labels: BTreeMap<String, RestorationClass>,
}

/// Grid segments ordered by midpoint (row-major), the first `n` kept.
pub fn grid_roads(n: usize) -> Vec<RoadSegment> {
    let mut g = 2;
    while 2 * g * (g - 1) < n {
        g += 1;
    }
    let mut segs: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for r in 0..g {
        for c in 0..g - 1 {
            segs.push(((c as f64 * BLOCK, r as f64 * BLOCK), ((c + 1) as f64 * BLOCK, r as f64 * BLOCK)));
        }
    }
    for r in 0..g - 1 {
        for c in 0..g {
            segs.push(((c as f64 * BLOCK, r as f64 * BLOCK), (c as f64 * BLOCK, (r + 1) as f64 * BLOCK)));
        }
    }
    let mid = |s: &((f64, f64), (f64, f64))| ((s.0 .1 + s.1 .1) / 2.0, (s.0 .0 + s.1 .0) / 2.0);
    segs.sort_by(|a, b| mid(a).partial_cmp(&mid(b)).expect("finite coordinates"));
    segs.truncate(n);
    segs.into_iter()
        .enumerate()
        .map(|(i, (a, b))| RoadSegment::new(format!("r{i:04}"), vec![a, b]).expect("grid segments are valid"))
        .collect()
}

fn lerp(a: (f64, f64), b: (f64, f64), t: f64) -> (f64, f64) {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}

/// Tertile classes of a latent value per road.
fn planted_labels(roads: &[RoadSegment], autocorrelated: bool, rng: &mut ChaCha8Rng) -> Vec<RestorationClass> {
    let latent: Vec<f64> = if autocorrelated {
        let waves: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| {
                let theta = rng.gen_range(0.0..PI);
                let k = 2.0 * PI / rng.gen_range(3.0 * BLOCK..8.0 * BLOCK);
                (k * theta.cos(), k * theta.sin(), rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        roads
            .iter()
            .map(|r| {
                let (x, y) = lerp(r.polyline[0], r.polyline[1], 0.5);
                waves.iter().map(|(kx, ky, phi)| (kx * x + ky * y + phi).cos()).sum()
            })
            .collect()
    } else {
        roads.iter().map(|_| rng.sample(StandardNormal)).collect()
    };
    let mut order: Vec<usize> = (0..roads.len()).collect();
    order.sort_by(|&a, &b| latent[a].partial_cmp(&latent[b]).expect("finite").then(a.cmp(&b)));
    let mut classes = vec![RestorationClass::Low; roads.len()];
    for (rank, &i) in order.iter().enumerate() {
        classes[i] = RestorationClass::from_index(rank * 3 / roads.len()).expect("rank tertile");
    }
    classes
}

struct Blob {
    class: u16,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

fn scene(class: usize, rng: &mut ChaCha8Rng) -> Vec<Blob> {
    let mut entities: Vec<u16> = TEMPLATES[class].to_vec();
    entities.shuffle(rng);
    entities.truncate(rng.gen_range(4..=6));
    let extra = loop {
        let c = rng.gen_range(0..150u16);
        if c != SKY && c != SIDEWALK && !entities.contains(&c) {
            break c;
        }
    };
    entities.push(extra);
    // compact windows give dense entity graphs, the full frame sparse ones
    let (ww, wh) = match class {
        2 => (28, 20),
        1 => (44, 32),
        _ => (RASTER_WIDTH, RASTER_HEIGHT),
    };
    let ox = rng.gen_range(0..=RASTER_WIDTH - ww);
    let oy = rng.gen_range(0..=RASTER_HEIGHT - wh);
    entities
        .into_iter()
        .map(|c| {
            let (w, h) = (rng.gen_range(5..=8), rng.gen_range(4..=6));
            let x = ox + rng.gen_range(0..=ww - w.min(ww));
            let y = oy + rng.gen_range(0..=wh - h.min(wh));
            Blob { class: c, x, y, w, h }
        })
        .collect()
}

fn rasterize(blobs: &[Blob], image_id: &str, road_id: &str) -> SegmentationMap {
    let mut classes = vec![SIDEWALK; RASTER_WIDTH * RASTER_HEIGHT];
    classes[..RASTER_WIDTH * RASTER_HEIGHT / 3].fill(SKY);
    for b in blobs {
        for y in b.y..(b.y + b.h).min(RASTER_HEIGHT) {
            for x in b.x..(b.x + b.w).min(RASTER_WIDTH) {
                classes[y * RASTER_WIDTH + x] = b.class;
            }
        }
    }
    SegmentationMap::new(RASTER_WIDTH, RASTER_HEIGHT, classes, image_id, road_id).expect("raster is well formed")
}

fn svg(blobs: &[Blob]) -> String {
    let scale = 5;
    let colour = |c: u16| {
        let h = (c as u32).wrapping_mul(2_654_435_761);
        format!("#{:06x}", h >> 8 & 0xffffff)
    };
    let mut out = String::new();
    let (w, h) = (RASTER_WIDTH * scale, RASTER_HEIGHT * scale);
    let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">");
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{}\" fill=\"#9ecbf0\"/>", h / 3);
    let _ = writeln!(out, "<rect y=\"{}\" width=\"{w}\" height=\"{}\" fill=\"#c8c2b8\"/>", h / 3, h - h / 3);
    for b in blobs {
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
            b.x * scale,
            b.y * scale,
            b.w * scale,
            b.h * scale,
            colour(b.class)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn rel(p: &Path) -> String {
    p.display().to_string()
}

/// Writes a dataset and a ready-to-run `restograph.conf` into `dir`.
/// Identical specs give byte-identical directories.
pub fn generate_fixture(spec: &FixtureSpec, dir: &Path) -> Result<Fixture, CliError> {
    if spec.roads < 10 {
        return Err(CliError::Usage(format!("fixture needs at least 10 roads, got {}", spec.roads)));
    }
    if spec.images_per_road == 0 || spec.points_per_road == 0 {
        return Err(CliError::Usage("images and points per road must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.structure_signal) || !spec.signal.is_finite() {
        return Err(CliError::Usage("structure signal must lie in [0, 1] and signal be finite".into()));
    }
    fs::create_dir_all(dir.join("rasters"))?;
    fs::create_dir_all(dir.join("images"))?;
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(s);
        rng
    };
    let roads = grid_roads(spec.roads);
    let classes = planted_labels(&roads, spec.autocorrelated, &mut stream(1));

    let mut rng = stream(2);
    let schema = FeatureSchema::new([("perception", PERCEPTION_COLUMNS), ("socioeconomic", SOCIOECONOMIC_COLUMNS)])?;
    let mut points = Vec::new();
    for (road, class) in roads.iter().zip(&classes) {
        let (a, b) = (road.polyline[0], road.polyline[1]);
        let len = road.length();
        let normal = ((a.1 - b.1) / len, (b.0 - a.0) / len);
        for _ in 0..spec.points_per_road {
            // away from the block corners, so only this road's buffer holds it
            let (x, y) = lerp(a, b, rng.gen_range(0.3..0.7));
            let off = rng.gen_range(-5.0..5.0);
            let mut values = Vec::with_capacity(schema.dim());
            for j in 0..PERCEPTION_COLUMNS {
                let planted = if j % 3 == class.index() { spec.signal } else { 0.0 };
                values.push(planted + rng.sample::<f64, _>(StandardNormal));
            }
            for _ in 0..SOCIOECONOMIC_COLUMNS {
                values.push(rng.sample(StandardNormal));
            }
            points.push(FeaturePoint { location: (x + off * normal.0, y + off * normal.1), values });
        }
    }
    write_feature_points(&dir.join("points.txt"), &schema, &points)?;

    let mut rng = stream(3);
    let mut segmentation = String::from("image_id,road_id,path\n");
    let mut images = String::from("image_id,path,x,y\n");
    for (road, class) in roads.iter().zip(&classes) {
        for k in 0..spec.images_per_road {
            let image_id = format!("{}_{k}", road.road_id);
            let template = if rng.gen_bool(spec.structure_signal) { class.index() } else { rng.gen_range(0..3) };
            let blobs = scene(template, &mut rng);
            let raster = Path::new("rasters").join(format!("{image_id}.seg"));
            let picture = Path::new("images").join(format!("{image_id}.svg"));
            fs::write(dir.join(&raster), format_segmentation(&rasterize(&blobs, &image_id, &road.road_id)))?;
            fs::write(dir.join(&picture), svg(&blobs))?;
            let (x, y) = lerp(road.polyline[0], road.polyline[1], (k + 1) as f64 / (spec.images_per_road + 1) as f64);
            let _ = writeln!(segmentation, "{image_id},{},{}", road.road_id, rel(&raster));
            let _ = writeln!(images, "{image_id},{},{x},{y}", rel(&picture));
        }
    }
    fs::write(dir.join("segmentation.csv"), segmentation)?;
    fs::write(dir.join("images.csv"), images)?;
    fs::write(dir.join("roads.txt"), format_roads(&roads))?;
    let labels: BTreeMap<String, RestorationClass> =
        roads.iter().zip(&classes).map(|(r, c)| (r.road_id.clone(), *c)).collect();
    fs::write(dir.join("labels.csv"), format_labels(&labels))?;
    let mut names = String::new();
    for (id, name) in CLASS_NAMES {
        let _ = writeln!(names, "{id} {name}");
    }
    fs::write(dir.join("classes.txt"), names)?;

    let config = dir.join("restograph.conf");
    let conf = format!(
        "# synthetic fixture: {} roads, signal {}, structure signal {}, autocorrelated {}, seed {}\n\
         [paths]\nroads = roads.txt\nsegmentation = segmentation.csv\npoints = points.txt\nlabels = labels.csv\n\
         class_names = classes.txt\nimages = images.csv\nledger = ledger.jsonl\noutput = out\n",
        spec.roads, spec.signal, spec.structure_signal, spec.autocorrelated, spec.seed
    );
    fs::write(&config, conf)?;
    Ok(Fixture { dir: dir.to_path_buf(), config, roads, labels })
}
