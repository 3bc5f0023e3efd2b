//! Plain-text `key = value` configuration with optional `[section]` headers.
//!
//! ```text
//! [paths]
//! roads = roads.txt
//! output = out
//!
//! [model]
//! arch = gat
//! epochs = 500
//! ```
//!
//! Keys may also be written fully qualified (`model.epochs = 500`). Relative
//! paths resolve against the directory of the config file; `--set` overrides
//! resolve against the working directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use restograph::city::{AssembleOptions, RestorationClass, WeightScheme};
use restograph::embed::WalkConfig;
use restograph::entity::DEFAULT_THRESHOLD;
use restograph::gnn::{Arch, ModelConfig};
use restograph::labeling::{Indicator, TrueSkillParams};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub roads: Option<PathBuf>,
    /// Segmentation manifest `image_id,road_id,path`.
    pub segmentation: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output: PathBuf,
    pub class_names: Option<PathBuf>,
    /// Rating corpus manifest `image_id,path,x,y`.
    pub images: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    /// Checkpoint evaluated instead of the primary model's.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    /// Predicted class whose roads are clustered.
    pub class: RestorationClass,
    /// Feature groups used as clustering columns; empty means all.
    pub groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub entity_threshold: f64,
    pub city: AssembleOptions,
    pub walk: WalkConfig,
    pub embed_seed: u64,
    /// Settings shared by every run; `model.arch` is the primary model used
    /// for predictions, evaluation and ablation.
    pub model: ModelConfig,
    /// Architectures compared by the train stage.
    pub archs: Vec<Arch>,
    /// Repetitions per architecture with seeds `model.seed + r`.
    pub runs: usize,
    /// Named sets of feature groups to keep; empty means the full set plus
    /// one set without each group.
    pub ablation: BTreeMap<String, Vec<String>>,
    pub trueskill: TrueSkillParams,
    pub labeling_seed: u64,
    pub questions: BTreeMap<Indicator, String>,
    pub cluster: ClusterConfig,
    pub report_top: usize,
    pub server_addr: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths { output: PathBuf::from("out"), ..Default::default() },
            entity_threshold: DEFAULT_THRESHOLD,
            city: AssembleOptions::default(),
            walk: WalkConfig::default(),
            embed_seed: 0,
            model: ModelConfig::with_arch(Arch::Gat),
            archs: Arch::ALL.to_vec(),
            runs: 10,
            ablation: BTreeMap::new(),
            trueskill: TrueSkillParams::default(),
            labeling_seed: 0,
            questions: BTreeMap::new(),
            cluster: ClusterConfig {
                k_min: 2,
                k_max: 20,
                seed: 0,
                class: RestorationClass::High,
                groups: Vec::new(),
            },
            report_top: 10,
            server_addr: "127.0.0.1:8080".into(),
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{key} = {value}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn opt_path(value: &str, base: &Path) -> Option<PathBuf> {
    if value.is_empty() {
        return None;
    }
    let p = PathBuf::from(value);
    Some(if p.is_absolute() { p } else { base.join(p) })
}

impl PipelineConfig {
    /// Reads a config file and applies `overrides` (`key=value`) on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            cfg.paths.output = base.join("out");
            for (key, value) in parse_entries(&text)? {
                cfg.set(&key, &value, base)?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v.trim(), Path::new("."))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses config text on its own, for round trips of the canonical form.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = PipelineConfig::default();
        for (key, value) in parse_entries(text)? {
            cfg.set(&key, &value, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. Unknown keys are usage errors.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), CliError> {
        let p = &mut self.paths;
        match key {
            "paths.roads" => p.roads = opt_path(value, base),
            "paths.segmentation" => p.segmentation = opt_path(value, base),
            "paths.points" => p.points = opt_path(value, base),
            "paths.labels" => p.labels = opt_path(value, base),
            "paths.output" => {
                p.output = opt_path(value, base).ok_or_else(|| bad(key, value, "must not be empty"))?
            }
            "paths.class_names" => p.class_names = opt_path(value, base),
            "paths.images" => p.images = opt_path(value, base),
            "paths.ledger" => p.ledger = opt_path(value, base),
            "paths.static" => p.static_dir = opt_path(value, base),
            "paths.checkpoint" => p.checkpoint = opt_path(value, base),
            "entity.threshold" => self.entity_threshold = num(key, value)?,
            "city.weights" => self.city.scheme = value.parse::<WeightScheme>().map_err(|e| bad(key, value, e))?,
            "city.k" => self.city.k = num(key, value)?,
            "city.snap" => self.city.snap = num(key, value)?,
            "city.half_width" => self.city.half_width = num(key, value)?,
            "city.normalize" => self.city.normalize = num(key, value)?,
            "walk.walks_per_node" => self.walk.walks_per_node = num(key, value)?,
            "walk.walk_length" => self.walk.walk_length = num(key, value)?,
            "walk.window" => self.walk.window = num(key, value)?,
            "walk.embed_dim" => self.walk.embed_dim = num(key, value)?,
            "walk.negatives" => self.walk.negatives = num(key, value)?,
            "walk.epochs" => self.walk.epochs = num(key, value)?,
            "walk.learning_rate" => self.walk.learning_rate = num(key, value)?,
            "walk.seed" => self.walk.seed = num(key, value)?,
            "embed.seed" => self.embed_seed = num(key, value)?,
            "model.arch" => self.model.arch = value.parse().map_err(|e| bad(key, value, e))?,
            "model.archs" => {
                self.archs = list(value)
                    .iter()
                    .map(|a| a.parse::<Arch>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(key, value, e))?
            }
            "model.hidden" => {
                self.model.hidden =
                    list(value).iter().map(|w| num(key, w)).collect::<Result<_, _>>()?
            }
            "model.heads" => self.model.heads = num(key, value)?,
            "model.epochs" => self.model.epochs = num(key, value)?,
            "model.learning_rate" => self.model.learning_rate = num(key, value)?,
            "model.weight_decay" => self.model.weight_decay = num(key, value)?,
            "model.seed" => self.model.seed = num(key, value)?,
            "model.runs" => self.runs = num(key, value)?,
            "model.split" => {
                let f: Vec<f64> = list(value).iter().map(|v| num(key, v)).collect::<Result<_, _>>()?;
                self.model.split = f.try_into().map_err(|_| bad(key, value, "expected three fractions"))?;
            }
            "trueskill.mu0" => self.trueskill.mu0 = num(key, value)?,
            "trueskill.sigma0" => self.trueskill.sigma0 = num(key, value)?,
            "trueskill.beta" => self.trueskill.beta = num(key, value)?,
            "trueskill.tau" => self.trueskill.tau = num(key, value)?,
            "trueskill.draw_probability" => self.trueskill.draw_probability = num(key, value)?,
            "labeling.seed" => self.labeling_seed = num(key, value)?,
            "cluster.k_min" => self.cluster.k_min = num(key, value)?,
            "cluster.k_max" => self.cluster.k_max = num(key, value)?,
            "cluster.seed" => self.cluster.seed = num(key, value)?,
            "cluster.class" => self.cluster.class = value.parse().map_err(|e| bad(key, value, e))?,
            "cluster.groups" => self.cluster.groups = list(value),
            "report.top" => self.report_top = num(key, value)?,
            "server.addr" => self.server_addr = value.to_string(),
            _ => {
                if let Some(name) = key.strip_prefix("ablate.set.") {
                    let groups = list(value);
                    if name.is_empty() || groups.is_empty() {
                        return Err(bad(key, value, "needs a name and at least one group"));
                    }
                    self.ablation.insert(name.to_string(), groups);
                } else if let Some(name) = key.strip_prefix("labeling.question.") {
                    let ind: Indicator = name.parse().map_err(|e| bad(key, value, e))?;
                    self.questions.insert(ind, value.to_string());
                } else {
                    return Err(CliError::Usage(format!("unknown config key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !(self.entity_threshold > 0.0) {
            return usage(format!("entity.threshold must be positive, got {}", self.entity_threshold));
        }
        if !(self.city.half_width > 0.0) || !(self.city.snap >= 0.0) || self.city.k == 0 {
            return usage("city.half_width must be positive, city.snap non-negative, city.k at least 1".into());
        }
        self.walk.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        for &arch in &self.archs {
            ModelConfig { arch, ..self.model.clone() }
                .validate()
                .map_err(|e| CliError::Usage(format!("model.archs: {e}")))?;
        }
        if self.archs.is_empty() || self.runs == 0 {
            return usage("model.archs must be nonempty and model.runs at least 1".into());
        }
        self.trueskill.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.cluster.k_min < 2 || self.cluster.k_max < self.cluster.k_min {
            return usage(format!(
                "cluster k range {}..{} must satisfy 2 <= k_min <= k_max",
                self.cluster.k_min, self.cluster.k_max
            ));
        }
        if self.report_top == 0 {
            return usage("report.top must be at least 1".into());
        }
        let p = &self.paths;
        for path in [&p.roads, &p.segmentation, &p.points, &p.labels, &p.class_names, &p.images, &p.static_dir]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(CliError::MissingPath(path.clone()));
            }
        }
        Ok(())
    }

    /// Every setting, one `key = value` per line in a fixed order. Reading
    /// this text back yields an equal config.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let p = &self.paths;
        kv("paths.roads", path(&p.roads));
        kv("paths.segmentation", path(&p.segmentation));
        kv("paths.points", path(&p.points));
        kv("paths.labels", path(&p.labels));
        kv("paths.output", p.output.display().to_string());
        kv("paths.class_names", path(&p.class_names));
        kv("paths.images", path(&p.images));
        kv("paths.ledger", path(&p.ledger));
        kv("paths.static", path(&p.static_dir));
        kv("paths.checkpoint", path(&p.checkpoint));
        kv("entity.threshold", format!("{:?}", self.entity_threshold));
        kv("city.weights", self.city.scheme.name().into());
        kv("city.k", self.city.k.to_string());
        kv("city.snap", format!("{:?}", self.city.snap));
        kv("city.half_width", format!("{:?}", self.city.half_width));
        kv("city.normalize", self.city.normalize.to_string());
        let w = &self.walk;
        kv("walk.walks_per_node", w.walks_per_node.to_string());
        kv("walk.walk_length", w.walk_length.to_string());
        kv("walk.window", w.window.to_string());
        kv("walk.embed_dim", w.embed_dim.to_string());
        kv("walk.negatives", w.negatives.to_string());
        kv("walk.epochs", w.epochs.to_string());
        kv("walk.learning_rate", format!("{:?}", w.learning_rate));
        kv("walk.seed", w.seed.to_string());
        kv("embed.seed", self.embed_seed.to_string());
        let m = &self.model;
        kv("model.arch", m.arch.name().into());
        kv("model.archs", self.archs.iter().map(|a| a.name()).collect::<Vec<_>>().join(","));
        kv("model.hidden", m.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","));
        kv("model.heads", m.heads.to_string());
        kv("model.epochs", m.epochs.to_string());
        kv("model.learning_rate", format!("{:?}", m.learning_rate));
        kv("model.weight_decay", format!("{:?}", m.weight_decay));
        kv("model.seed", m.seed.to_string());
        kv("model.runs", self.runs.to_string());
        kv("model.split", m.split.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>().join(","));
        for (name, groups) in &self.ablation {
            kv(&format!("ablate.set.{name}"), groups.join(","));
        }
        let t = &self.trueskill;
        kv("trueskill.mu0", format!("{:?}", t.mu0));
        kv("trueskill.sigma0", format!("{:?}", t.sigma0));
        kv("trueskill.beta", format!("{:?}", t.beta));
        kv("trueskill.tau", format!("{:?}", t.tau));
        kv("trueskill.draw_probability", format!("{:?}", t.draw_probability));
        kv("labeling.seed", self.labeling_seed.to_string());
        for (ind, q) in &self.questions {
            kv(&format!("labeling.question.{}", ind.name()), q.clone());
        }
        let c = &self.cluster;
        kv("cluster.k_min", c.k_min.to_string());
        kv("cluster.k_max", c.k_max.to_string());
        kv("cluster.seed", c.seed.to_string());
        kv("cluster.class", c.class.name().into());
        kv("cluster.groups", c.groups.join(","));
        kv("report.top", self.report_top.to_string());
        kv("server.addr", self.server_addr.clone());
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Splits config text into fully qualified `(key, value)` pairs.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}
