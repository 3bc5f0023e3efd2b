//! Pipeline stages. Each stage reads its inputs from the configured paths or
//! from earlier stages' outputs, writes versioned files under the output
//! directory and leaves a provenance record next to them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use restograph::analysis::{class_structure_graphs, format_assignments, format_structure_report, format_structure_rows, format_sweep, silhouette_sweep};
use restograph::city::{assemble_city_graph, read_bundle, read_feature_points, read_labels, read_roads, write_bundle, CityGraph, RestorationClass, RoadFeatures};
use restograph::embed::{embed_roads, read_street_vectors, write_street_vectors, STREET_DIM};
use restograph::entity::{graph_from_segmentation, merge_road_graphs, read_entity_graph, read_manifest, read_segmentation, write_entity_graph, ClassNames, EntityGraph};
use restograph::format::{data_lines, header_line, strip_header};
use restograph::gnn::{
    format_rows, format_table, load_checkpoint, predict_graph, save_checkpoint, stratified_split, summarize, train, evaluate, Arch, GnnModel, ModelConfig, ReportRow, TrainReport,
};
use restograph::labeling::{label_roads, parse_label_set, parse_ledger, read_image_manifest, write_label_set, RatingState, ScoredPoint};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Label,
    BuildEntityGraphs,
    EmbedStreets,
    BuildCityGraph,
    Train,
    Evaluate,
    Ablate,
    Cluster,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Label => "label",
            Stage::BuildEntityGraphs => "build-entity-graphs",
            Stage::EmbedStreets => "embed-streets",
            Stage::BuildCityGraph => "build-city-graph",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Ablate => "ablate",
            Stage::Cluster => "cluster",
            Stage::Report => "report",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        [
            Stage::Label,
            Stage::BuildEntityGraphs,
            Stage::EmbedStreets,
            Stage::BuildCityGraph,
            Stage::Train,
            Stage::Evaluate,
            Stage::Ablate,
            Stage::Cluster,
            Stage::Report,
        ]
        .into_iter()
        .find(|st| st.name() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown stage {s:?}")))
    }
}

/// Where every stage puts its files.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn entity_dir(&self) -> PathBuf {
        self.root.join("entity")
    }
    pub fn entity_index(&self) -> PathBuf {
        self.entity_dir().join("index.txt")
    }
    pub fn streets(&self) -> PathBuf {
        self.root.join("streets.txt")
    }
    pub fn city_dir(&self) -> PathBuf {
        self.root.join("city")
    }
    pub fn model(&self, arch: Arch) -> PathBuf {
        self.root.join("models").join(format!("{arch}.ckpt"))
    }
    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.csv")
    }
    pub fn clusters_dir(&self) -> PathBuf {
        self.root.join("clusters")
    }
    pub fn rated_labels(&self) -> PathBuf {
        self.root.join("rated_labels.csv")
    }
    pub fn provenance(&self, stage: Stage) -> PathBuf {
        self.root.join("provenance").join(format!("{}.json", stage.name()))
    }
    pub fn marker(&self, stage: Stage) -> PathBuf {
        self.root.join(format!("{}.incomplete", stage.name()))
    }
}

#[derive(Debug, Default)]
struct StageOutput {
    outputs: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    summary: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub seconds: f64,
    /// Human-readable result for the terminal.
    pub summary: String,
}

#[derive(Serialize)]
struct Provenance<'a> {
    format: &'static str,
    version: u32,
    stage: &'static str,
    config_hash: String,
    config: String,
    seeds: &'a BTreeMap<String, u64>,
    started_unix_ms: u128,
    seconds: f64,
    outputs: Vec<String>,
}

/// Runs one stage. A `<stage>.incomplete` marker exists while the stage runs
/// and stays behind, holding the error, if it fails.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageRecord, CliError> {
    let layout = Layout::new(&cfg.paths.output);
    fs::create_dir_all(&layout.root)?;
    let marker = layout.marker(stage);
    fs::write(&marker, "running\n")?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let clock = Instant::now();
    log::info!("stage {} started", stage.name());
    let result = match stage {
        Stage::Label => label(cfg, &layout),
        Stage::BuildEntityGraphs => build_entity_graphs(cfg, &layout),
        Stage::EmbedStreets => embed_streets(cfg, &layout),
        Stage::BuildCityGraph => build_city_graph(cfg, &layout),
        Stage::Train => train_stage(cfg, &layout),
        Stage::Evaluate => evaluate_stage(cfg, &layout),
        Stage::Ablate => ablate_stage(cfg, &layout),
        Stage::Cluster => cluster_stage(cfg, &layout),
        Stage::Report => report_stage(cfg, &layout),
    };
    let seconds = clock.elapsed().as_secs_f64();
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            let _ = fs::write(&marker, format!("failed: {e}\n"));
            return Err(CliError::Stage { stage: stage.name(), source: Box::new(e) });
        }
    };
    let record = Provenance {
        format: "provenance",
        version: restograph::format::VERSION,
        stage: stage.name(),
        config_hash: cfg.hash(),
        config: cfg.canonical(),
        seeds: &out.seeds,
        started_unix_ms: started,
        seconds,
        outputs: out
            .outputs
            .iter()
            .map(|p| p.strip_prefix(&layout.root).unwrap_or(p).display().to_string())
            .collect(),
    };
    let path = layout.provenance(stage);
    fs::create_dir_all(path.parent().expect("provenance has a parent"))?;
    fs::write(&path, serde_json::to_string_pretty(&record).map_err(restograph::Error::from)? + "\n")?;
    fs::remove_file(&marker)?;
    log::info!("stage {} finished in {seconds:.2} s", stage.name());
    Ok(StageRecord { stage, outputs: out.outputs, seconds, summary: out.summary })
}

/// Stages run by [`run_pipeline`] for this config. Ratings are turned into
/// labels first when no label file is given but a ledger is.
pub fn pipeline_stages(cfg: &PipelineConfig) -> Vec<Stage> {
    let mut stages = Vec::new();
    let p = &cfg.paths;
    if p.labels.is_none() && p.images.is_some() && p.ledger.as_ref().is_some_and(|l| l.exists()) {
        stages.push(Stage::Label);
    }
    stages.extend([
        Stage::BuildEntityGraphs,
        Stage::EmbedStreets,
        Stage::BuildCityGraph,
        Stage::Train,
        Stage::Evaluate,
        Stage::Ablate,
        Stage::Cluster,
        Stage::Report,
    ]);
    stages
}

/// Runs every stage in order, stopping at the first failure.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<StageRecord>, CliError> {
    pipeline_stages(cfg).into_iter().map(|s| run_stage(cfg, s)).collect()
}

/// Runs a stage again from its provenance record alone.
pub fn rerun(provenance: &Path) -> Result<StageRecord, CliError> {
    let text = fs::read_to_string(existing(provenance.to_path_buf())?)?;
    let record: serde_json::Value = serde_json::from_str(&text).map_err(restograph::Error::from)?;
    let field = |k: &str| {
        record[k]
            .as_str()
            .ok_or_else(|| CliError::Core(restograph::Error::Parse(format!("{}: no {k} field", provenance.display()))))
    };
    if record["format"] != "provenance" || record["version"] != restograph::format::VERSION {
        return Err(restograph::Error::Parse(format!("{}: not a provenance record of a known version", provenance.display())).into());
    }
    let stage: Stage = field("stage")?.parse()?;
    let cfg = PipelineConfig::parse(field("config")?, Path::new("."))?;
    run_stage(&cfg, stage)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("{key} is not set")))
}

fn existing(p: PathBuf) -> Result<PathBuf, CliError> {
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::MissingPath(p))
    }
}

/// Maps `f` over `items` on all cores; results keep the input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R, CliError> + Sync) -> Result<Vec<R>, CliError> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(threads).max(1);
    let f = &f;
    let parts: Vec<Result<Vec<R>, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Result<Vec<R>, CliError>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn build_entity_graphs(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let manifest = read_manifest(required(&cfg.paths.segmentation, "paths.segmentation")?)?;
    let mut by_road: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for entry in manifest {
        by_road.entry(entry.road_id.clone()).or_default().push(entry);
    }
    let roads: Vec<(String, Vec<_>)> = by_road.into_iter().collect();
    let graphs = parallel_map(&roads, |(road, images)| {
        let per_image = images
            .iter()
            .map(|e| graph_from_segmentation(&read_segmentation(&e.path, &e.image_id, &e.road_id)?, cfg.entity_threshold))
            .collect::<restograph::Result<Vec<_>>>()?;
        Ok((road.clone(), merge_road_graphs(&per_image)?))
    })?;
    let dir = layout.entity_dir();
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    let mut index = header_line("entity-index");
    for (road, g) in &graphs {
        write_entity_graph(&dir, road, g)?;
        let _ = writeln!(index, "{road}");
    }
    fs::write(layout.entity_index(), index)?;
    let edges: usize = graphs.iter().map(|(_, g)| g.edge_count()).sum();
    Ok(StageOutput {
        outputs: vec![dir],
        summary: format!("{} road entity graphs, {edges} edges in total", graphs.len()),
        ..Default::default()
    })
}

fn entity_graphs(layout: &Layout) -> Result<BTreeMap<String, EntityGraph>, CliError> {
    let text = fs::read_to_string(existing(layout.entity_index())?)?;
    let body = strip_header(&text, "entity-index")?;
    data_lines(body)
        .map(|(_, road)| Ok((road.to_string(), read_entity_graph(&layout.entity_dir(), road)?)))
        .collect()
}

fn embed_streets(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let graphs = entity_graphs(layout)?;
    let vectors = embed_roads(&graphs, &cfg.walk, cfg.embed_seed)?;
    write_street_vectors(&layout.streets(), &vectors)?;
    Ok(StageOutput {
        outputs: vec![layout.streets()],
        seeds: BTreeMap::from([("walk.seed".into(), cfg.walk.seed), ("embed.seed".into(), cfg.embed_seed)]),
        summary: format!("{} street structure vectors", vectors.len()),
    })
}

fn road_labels(cfg: &PipelineConfig, layout: &Layout) -> Result<BTreeMap<String, RestorationClass>, CliError> {
    if let Some(p) = &cfg.paths.labels {
        return Ok(read_labels(p)?);
    }
    let rated = layout.rated_labels();
    if rated.exists() {
        return Ok(parse_label_set(&fs::read_to_string(rated)?)?.classes());
    }
    log::warn!("no labels configured; every road is unlabelled");
    Ok(BTreeMap::new())
}

fn build_city_graph(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let roads = read_roads(required(&cfg.paths.roads, "paths.roads")?)?;
    let (schema, points) = read_feature_points(required(&cfg.paths.points, "paths.points")?)?;
    let vectors = read_street_vectors(&existing(layout.streets())?)?;
    let spatial = RoadFeatures {
        name: "spatial".into(),
        width: STREET_DIM,
        values: vectors.into_iter().map(|v| (v.road_id, v.values.to_vec())).collect(),
    };
    let labels = road_labels(cfg, layout)?;
    let graph = assemble_city_graph(&roads, &points, &schema, &[spatial], &labels, &cfg.city)?;
    let dir = layout.city_dir();
    write_bundle(&dir, &graph)?;
    let w = graph.weights();
    Ok(StageOutput {
        outputs: vec![dir],
        summary: format!(
            "{} roads, {} features, {} weights: {} undirected edges, {} directed relations, {} isolated, {} labelled",
            graph.n(),
            graph.features().cols(),
            w.scheme(),
            w.edge_count(),
            w.directed_relation_count(),
            w.isolated().len(),
            graph.labeled_count()
        ),
        ..Default::default()
    })
}

fn city_graph(layout: &Layout) -> Result<CityGraph, CliError> {
    Ok(read_bundle(&existing(layout.city_dir())?)?)
}

fn run_config(cfg: &PipelineConfig, arch: Arch, run: usize) -> ModelConfig {
    ModelConfig { arch, seed: cfg.model.seed + run as u64, ..cfg.model.clone() }
}

fn seeds_of(cfg: &PipelineConfig) -> BTreeMap<String, u64> {
    (0..cfg.runs).map(|r| (format!("model.seed.run{r}"), cfg.model.seed + r as u64)).collect()
}

fn format_predictions(graph: &CityGraph, predicted: &[usize]) -> String {
    let mut out = header_line("road-predictions");
    out.push_str("road_id,class\n");
    for (id, &c) in graph.road_ids().iter().zip(predicted) {
        let class = RestorationClass::from_index(c).expect("three outputs");
        let _ = writeln!(out, "{id},{class}");
    }
    out
}

/// Reads `road_id,class` predictions.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, RestorationClass>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (line, l) in data_lines(strip_header(&text, "road-predictions")?) {
        let Some((id, class)) = l.split_once(',') else {
            return Err(restograph::Error::Parse(format!("{}:{line}: expected road_id,class", path.display())).into());
        };
        if id != "road_id" {
            out.insert(id.to_string(), class.parse()?);
        }
    }
    Ok(out)
}

fn train_stage(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let graph = city_graph(layout)?;
    let mut jobs: Vec<(Arch, usize)> =
        cfg.archs.iter().flat_map(|&a| (0..cfg.runs).map(move |r| (a, r))).collect();
    if !cfg.archs.contains(&cfg.model.arch) {
        jobs.push((cfg.model.arch, 0));
    }
    let results: Vec<(Arch, usize, GnnModel, TrainReport)> = parallel_map(&jobs, |&(arch, r)| {
        let (model, report) = train(&graph, &run_config(cfg, arch, r))?;
        Ok((arch, r, model, report))
    })?;

    let mut outputs = Vec::new();
    for (arch, r, model, _) in &results {
        if *r == 0 {
            let path = layout.model(*arch);
            fs::create_dir_all(path.parent().expect("models dir"))?;
            save_checkpoint(model, &path)?;
            outputs.push(path);
        }
    }
    let primary = results
        .iter()
        .find(|(a, r, _, _)| *a == cfg.model.arch && *r == 0)
        .map(|(_, _, m, _)| m)
        .expect("primary model was trained");
    let predicted = predict_graph(primary, &graph)?;
    fs::write(layout.predictions(), format_predictions(&graph, &predicted))?;
    outputs.push(layout.predictions());

    let scheme = graph.weights().scheme().name();
    let rows: Vec<ReportRow> = cfg
        .archs
        .iter()
        .map(|&arch| {
            let runs: Vec<TrainReport> =
                results.iter().filter(|(a, ..)| *a == arch).map(|(.., rep)| rep.clone()).collect();
            summarize(arch.name(), scheme, &runs)
        })
        .collect();
    let mut per_run = header_line("train-runs");
    per_run.push_str("model\tseed\ttrain_accuracy\taccuracy\tf1\n");
    for (arch, _, _, rep) in results.iter().filter(|(a, ..)| cfg.archs.contains(a)) {
        let _ = writeln!(
            per_run,
            "{arch}\t{}\t{:.6}\t{:.6}\t{:.6}",
            rep.seed, rep.train_accuracy, rep.test.accuracy, rep.test.macro_f1
        );
    }
    let reports = layout.reports_dir();
    fs::create_dir_all(&reports)?;
    fs::write(reports.join("train.tsv"), format_rows(&rows))?;
    fs::write(reports.join("train_runs.tsv"), per_run)?;
    outputs.push(reports.join("train.tsv"));
    outputs.push(reports.join("train_runs.tsv"));
    Ok(StageOutput { outputs, seeds: seeds_of(cfg), summary: format_table(&rows) })
}

fn evaluate_stage(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let graph = city_graph(layout)?;
    let path = existing(cfg.paths.checkpoint.clone().unwrap_or_else(|| layout.model(cfg.model.arch)))?;
    let model = load_checkpoint(&path)?;
    let split = stratified_split(&graph.label_indices(), model.config.split, model.config.seed);
    let mut out = header_line("evaluation");
    let _ = writeln!(out, "# model {} seed {}", model.arch(), model.config.seed);
    out.push_str("mask\tnodes\taccuracy\tf1\n");
    let mut summary = String::new();
    let mut test_confusion = None;
    for (name, mask) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if mask.is_empty() {
            continue;
        }
        let m = evaluate(&model, &graph, mask)?;
        let _ = writeln!(out, "{name}\t{}\t{:.6}\t{:.6}", mask.len(), m.accuracy, m.macro_f1);
        let _ = writeln!(summary, "{name:<5} {:>4} nodes  accuracy {:.3}  F1 {:.3}", mask.len(), m.accuracy, m.macro_f1);
        if name == "test" {
            test_confusion = Some(m.confusion);
        }
    }
    if let Some(conf) = test_confusion {
        out.push_str("# test confusion (rows true low/medium/high, columns predicted)\n");
        for row in conf {
            let _ = writeln!(out, "# {} {} {}", row[0], row[1], row[2]);
        }
    }
    let file = layout.reports_dir().join("evaluate.tsv");
    fs::create_dir_all(layout.reports_dir())?;
    fs::write(&file, out)?;
    Ok(StageOutput {
        outputs: vec![file],
        seeds: BTreeMap::from([("model.seed".into(), model.config.seed)]),
        summary,
    })
}

/// Configured ablation sets, or all groups plus one set without each group.
pub fn ablation_sets(cfg: &PipelineConfig, graph: &CityGraph) -> Vec<(String, Vec<String>)> {
    if !cfg.ablation.is_empty() {
        return cfg.ablation.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    }
    let names: Vec<String> = graph.groups().iter().map(|g| g.name.clone()).collect();
    let mut sets = vec![("all".to_string(), names.clone())];
    if names.len() > 1 {
        for drop in &names {
            sets.push((format!("without_{drop}"), names.iter().filter(|n| *n != drop).cloned().collect()));
        }
    }
    sets
}

fn ablate_stage(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let graph = city_graph(layout)?;
    let sets = ablation_sets(cfg, &graph);
    let jobs: Vec<(usize, usize)> = (0..sets.len()).flat_map(|s| (0..cfg.runs).map(move |r| (s, r))).collect();
    let reports = parallel_map(&jobs, |&(s, r)| {
        let keep: Vec<&str> = sets[s].1.iter().map(String::as_str).collect();
        let reduced = graph.keep_groups(&keep)?;
        Ok((s, train(&reduced, &run_config(cfg, cfg.model.arch, r))?.1))
    })?;
    let mut out = header_line("ablation-report");
    let _ = writeln!(out, "# model {}", cfg.model.arch);
    out.push_str("set\tgroups\truns\taccuracy\taccuracy_std\tf1\tf1_std\n");
    let mut summary = String::new();
    for (s, (name, groups)) in sets.iter().enumerate() {
        let runs: Vec<TrainReport> = reports.iter().filter(|(i, _)| *i == s).map(|(_, r)| r.clone()).collect();
        let row = summarize(name, graph.weights().scheme().name(), &runs);
        let _ = writeln!(
            out,
            "{name}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            groups.join("+"),
            row.runs,
            row.accuracy_mean,
            row.accuracy_std,
            row.f1_mean,
            row.f1_std
        );
        let _ = writeln!(
            summary,
            "{name:<24} accuracy {:.3} ± {:.3}  F1 {:.3} ± {:.3}",
            row.accuracy_mean, row.accuracy_std, row.f1_mean, row.f1_std
        );
    }
    fs::create_dir_all(layout.reports_dir())?;
    let file = layout.reports_dir().join("ablation.tsv");
    fs::write(&file, out)?;
    Ok(StageOutput { outputs: vec![file], seeds: seeds_of(cfg), summary })
}

fn label(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let images = read_image_manifest(required(&cfg.paths.images, "paths.images")?)?;
    let ledger_path = existing(required(&cfg.paths.ledger, "paths.ledger")?.to_path_buf())?;
    let ledger = parse_ledger(&fs::read_to_string(&ledger_path)?)?;
    let state = RatingState::replay(cfg.trueskill.clone(), images.iter().map(|e| e.image_id.clone()), &ledger)?;
    let composite = state.composite_scores();
    if !composite.incomplete.is_empty() {
        log::warn!("{} image(s) lack ratings on some indicator and are not scored", composite.incomplete.len());
    }
    let points: Vec<ScoredPoint> = images
        .iter()
        .filter_map(|e| {
            composite.scores.get(&e.image_id).map(|&score| ScoredPoint {
                image_id: e.image_id.clone(),
                location: e.location,
                score,
            })
        })
        .collect();
    let roads = read_roads(required(&cfg.paths.roads, "paths.roads")?)?;
    let set = label_roads(&points, &roads, cfg.city.half_width)?;
    write_label_set(&layout.rated_labels(), &set)?;
    let counts = set.class_counts();
    Ok(StageOutput {
        outputs: vec![layout.rated_labels()],
        summary: format!(
            "{} votes, {} scored images, {} labelled roads (low {}, medium {}, high {}), breaks {:.3} {:.3}",
            ledger.len(),
            points.len(),
            set.roads.len(),
            counts[0],
            counts[1],
            counts[2],
            set.thresholds[0],
            set.thresholds[1]
        ),
        ..Default::default()
    })
}

fn cluster_stage(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let graph = city_graph(layout)?;
    let predictions = read_predictions(&existing(layout.predictions())?)?;
    let columns: Vec<usize> = if cfg.cluster.groups.is_empty() {
        (0..graph.features().cols()).collect()
    } else {
        let mut cols = Vec::new();
        for name in &cfg.cluster.groups {
            let g = graph
                .groups()
                .iter()
                .find(|g| &g.name == name)
                .ok_or_else(|| CliError::Usage(format!("cluster.groups: no feature group {name:?}")))?;
            cols.extend(g.start..g.end);
        }
        cols
    };
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for (i, id) in graph.road_ids().iter().enumerate() {
        if predictions.get(id) == Some(&cfg.cluster.class) {
            ids.push(id.clone());
            vectors.push(columns.iter().map(|&c| graph.features()[(i, c)]).collect::<Vec<f64>>());
        }
    }
    let distinct = vectors
        .iter()
        .map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())
        .collect::<BTreeSet<_>>()
        .len();
    let k_max = cfg.cluster.k_max.min(ids.len().saturating_sub(1)).min(distinct);
    let dir = layout.clusters_dir();
    fs::create_dir_all(&dir)?;
    let (sweep_file, assign_file) = (dir.join("silhouette.tsv"), dir.join("assignments.csv"));
    let summary = if k_max < cfg.cluster.k_min {
        log::warn!("{} road(s) predicted {}; too few to cluster", ids.len(), cfg.cluster.class);
        fs::write(&sweep_file, header_line("silhouette-sweep") + "# too few roads to cluster\nk\tsilhouette\n")?;
        fs::write(&assign_file, header_line("cluster-assignments") + "road_id,cluster\n")?;
        format!("{} road(s) predicted {}; nothing clustered", ids.len(), cfg.cluster.class)
    } else {
        let sweep = silhouette_sweep(&vectors, cfg.cluster.k_min..=k_max, cfg.cluster.seed)?;
        fs::write(&sweep_file, format_sweep(&sweep))?;
        fs::write(&assign_file, format_assignments(&ids, &sweep.best))?;
        format!(
            "{} roads predicted {}: best k = {} (silhouette {:.3})",
            ids.len(),
            cfg.cluster.class,
            sweep.best_k,
            sweep.best.silhouette
        )
    };
    Ok(StageOutput {
        outputs: vec![sweep_file, assign_file],
        seeds: BTreeMap::from([("cluster.seed".into(), cfg.cluster.seed)]),
        summary,
    })
}

fn read_assignments(path: &Path) -> Result<BTreeMap<String, usize>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (line, l) in data_lines(strip_header(&text, "cluster-assignments")?) {
        let Some((id, c)) = l.split_once(',') else {
            return Err(restograph::Error::Parse(format!("{}:{line}: expected road_id,cluster", path.display())).into());
        };
        if id != "road_id" {
            let c = c.trim().parse().map_err(|_| restograph::Error::Parse(format!("line {line}: bad cluster {c:?}")))?;
            out.insert(id.to_string(), c);
        }
    }
    Ok(out)
}

fn report_stage(cfg: &PipelineConfig, layout: &Layout) -> Result<StageOutput, CliError> {
    let graphs = entity_graphs(layout)?;
    let predictions = read_predictions(&existing(layout.predictions())?)?;
    let names = match &cfg.paths.class_names {
        Some(p) => ClassNames::load(p)?,
        None => ClassNames::default(),
    };
    let mut by_class: BTreeMap<String, Vec<&EntityGraph>> = BTreeMap::new();
    for (road, class) in &predictions {
        if let Some(g) = graphs.get(road) {
            by_class.entry(class.name().to_string()).or_default().push(g);
        }
    }
    let assign_path = layout.clusters_dir().join("assignments.csv");
    let mut by_cluster: BTreeMap<String, Vec<&EntityGraph>> = BTreeMap::new();
    if assign_path.exists() {
        for (road, c) in read_assignments(&assign_path)? {
            if let Some(g) = graphs.get(&road) {
                by_cluster.entry(format!("cluster{c}")).or_default().push(g);
            }
        }
    }
    let dir = layout.reports_dir();
    fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();
    let mut summary = String::new();
    for (stem, groups) in [("structure_by_class", &by_class), ("structure_by_cluster", &by_cluster)] {
        let table = class_structure_graphs(groups, cfg.report_top)?;
        let text = format_structure_report(&table, &names);
        fs::write(dir.join(format!("{stem}.txt")), &text)?;
        fs::write(dir.join(format!("{stem}.tsv")), format_structure_rows(&table, &names))?;
        outputs.push(dir.join(format!("{stem}.txt")));
        outputs.push(dir.join(format!("{stem}.tsv")));
        if !table.is_empty() {
            summary.push_str(&text);
        }
    }
    Ok(StageOutput { outputs, summary, ..Default::default() })
}
