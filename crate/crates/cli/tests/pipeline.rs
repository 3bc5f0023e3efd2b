//! Configuration, fixtures, stage orchestration and the binary's exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use restograph::city::read_bundle;
use restograph::gnn::{train, Arch, ModelConfig};
use restograph_cli::{generate_fixture, rerun, run_pipeline, run_stage, CliError, FixtureSpec, Layout, PipelineConfig, Stage};

fn snapshot(root: &Path, skip: &[&str]) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, skip: &[&str], out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(root).unwrap().to_path_buf();
            if skip.iter().any(|s| rel.starts_with(s)) {
                continue;
            }
            if path.is_dir() {
                walk(&path, root, skip, out);
            } else {
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, skip, &mut out);
    out
}

fn fixture_config(dir: &Path, spec: &FixtureSpec, overrides: &[&str]) -> PipelineConfig {
    let fx = generate_fixture(spec, dir).unwrap();
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    PipelineConfig::load(Some(&fx.config), &overrides).unwrap()
}

const FAST: &[&str] = &["walk.epochs=2", "model.epochs=60"];

#[test]
fn canonical_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), &FixtureSpec::default(), &["model.epochs=7", "ablate.set.only_spatial=spatial"]);
    assert_eq!(cfg.model.epochs, 7);
    assert_eq!(cfg.ablation["only_spatial"], vec!["spatial".to_string()]);
    let back = PipelineConfig::parse(&cfg.canonical(), Path::new(".")).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn file_paths_resolve_against_the_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), &FixtureSpec::default(), &[]);
    assert_eq!(cfg.paths.roads.as_deref(), Some(dir.path().join("roads.txt").as_path()));
    assert_eq!(cfg.paths.output, dir.path().join("out"));
}

#[test]
fn bad_keys_and_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let fx = generate_fixture(&FixtureSpec::default(), dir.path()).unwrap();
    for o in ["no.such.key=1", "model.epochs=many", "model.epochs", "cluster.k_min=1", "model.archs="] {
        let err = PipelineConfig::load(Some(&fx.config), &[o.to_string()]).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{o}: {err}");
    }
}

#[test]
fn missing_roads_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let fx = generate_fixture(&FixtureSpec::default(), dir.path()).unwrap();
    fs::remove_file(dir.path().join("roads.txt")).unwrap();
    let err = PipelineConfig::load(Some(&fx.config), &[]).unwrap_err();
    assert!(matches!(err, CliError::MissingPath(_)), "{err:?}");
    assert!(err.to_string().contains("roads.txt"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn fixture_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = FixtureSpec { roads: 10, seed: 1, ..FixtureSpec::default() };
    let fa = generate_fixture(&spec, a.path()).unwrap();
    let fb = generate_fixture(&spec, b.path()).unwrap();
    assert_eq!(fa.labels, fb.labels);
    let (sa, sb) = (snapshot(a.path(), &[]), snapshot(b.path(), &[]));
    assert!(sa.len() > 5);
    assert_eq!(sa, sb);
    let c = tempfile::tempdir().unwrap();
    generate_fixture(&FixtureSpec { seed: 2, ..spec }, c.path()).unwrap();
    assert_ne!(snapshot(c.path(), &[]), sa);
}

#[test]
fn fixture_needs_ten_roads() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate_fixture(&FixtureSpec { roads: 9, ..FixtureSpec::default() }, dir.path()).is_err());
}

#[test]
fn ten_road_fixture_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), &FixtureSpec::default(), FAST);
    let records = run_pipeline(&cfg).unwrap();
    let stages: Vec<Stage> = records.iter().map(|r| r.stage).collect();
    assert_eq!(
        stages,
        [
            Stage::BuildEntityGraphs,
            Stage::EmbedStreets,
            Stage::BuildCityGraph,
            Stage::Train,
            Stage::Evaluate,
            Stage::Ablate,
            Stage::Cluster,
            Stage::Report
        ]
    );
    let layout = Layout::new(&cfg.paths.output);
    let mut expected = vec![
        layout.entity_index(),
        layout.streets(),
        layout.predictions(),
        layout.reports_dir().join("train.tsv"),
        layout.reports_dir().join("evaluate.tsv"),
        layout.reports_dir().join("ablation.tsv"),
    ];
    expected.extend(cfg.archs.iter().map(|&a| layout.model(a)));
    for r in &records {
        assert!(!r.outputs.is_empty(), "{} wrote nothing", r.stage.name());
        expected.extend(r.outputs.iter().cloned());
        expected.push(layout.provenance(r.stage));
        assert!(!layout.marker(r.stage).exists());
    }
    for p in expected {
        assert!(p.exists(), "missing {}", p.display());
    }
    let graph = read_bundle(&layout.city_dir()).unwrap();
    assert_eq!(graph.n(), 10);
    let predictions = fs::read_to_string(layout.predictions()).unwrap();
    assert_eq!(predictions.lines().filter(|l| !l.starts_with('#') && !l.starts_with("road_id")).count(), 10);
}

#[test]
fn rerun_from_provenance_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), &FixtureSpec::default(), FAST);
    run_pipeline(&cfg).unwrap();
    let before = snapshot(&cfg.paths.output, &["provenance"]);
    let layout = Layout::new(&cfg.paths.output);
    for stage in [Stage::EmbedStreets, Stage::Train, Stage::Cluster] {
        let record = rerun(&layout.provenance(stage)).unwrap();
        assert_eq!(record.stage, stage);
    }
    assert_eq!(snapshot(&cfg.paths.output, &["provenance"]), before);
    let again = run_pipeline(&cfg).unwrap();
    assert_eq!(again.len(), 8);
    assert_eq!(snapshot(&cfg.paths.output, &["provenance"]), before);
}

#[test]
fn provenance_records_config_hash_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), &FixtureSpec::default(), FAST);
    run_stage(&cfg, Stage::BuildEntityGraphs).unwrap();
    run_stage(&cfg, Stage::EmbedStreets).unwrap();
    let text = fs::read_to_string(Layout::new(&cfg.paths.output).provenance(Stage::EmbedStreets)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["format"], "provenance");
    assert_eq!(v["stage"], "embed-streets");
    assert_eq!(v["config_hash"], cfg.hash());
    assert_eq!(v["config"], cfg.canonical());
    assert!(v["seeds"].as_object().is_some_and(|s| !s.is_empty()));
    assert!(v["seconds"].as_f64().is_some_and(|s| s >= 0.0));
}

#[test]
fn rerun_rejects_unknown_versions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    fs::write(&path, r#"{"format":"provenance","version":99,"stage":"train","config":""}"#).unwrap();
    assert_eq!(rerun(&path).unwrap_err().exit_code(), 2);
    assert!(matches!(rerun(&dir.path().join("absent.json")), Err(CliError::MissingPath(_))));
}

#[test]
fn failed_stage_names_itself_and_leaves_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), &FixtureSpec::default(), FAST);
    let err = run_stage(&cfg, Stage::Train).unwrap_err();
    assert!(err.to_string().contains("train"), "{err}");
    assert_eq!(err.exit_code(), 2);
    let marker = fs::read_to_string(Layout::new(&cfg.paths.output).marker(Stage::Train)).unwrap();
    assert!(marker.starts_with("failed"), "{marker}");
}

#[test]
fn null_signal_hovers_at_majority_rate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec { roads: 200, signal: 0.0, structure_signal: 0.0, autocorrelated: false, ..FixtureSpec::default() };
    let cfg = fixture_config(dir.path(), &spec, &["walk.epochs=1"]);
    for s in [Stage::BuildEntityGraphs, Stage::EmbedStreets, Stage::BuildCityGraph] {
        run_stage(&cfg, s).unwrap();
    }
    let graph = read_bundle(&cfg.paths.output.join("city")).unwrap();
    let labels = graph.label_indices();
    let labelled = labels.iter().flatten().count() as f64;
    let majority = (0..3).map(|c| labels.iter().filter(|&&l| l == Some(c)).count()).max().unwrap() as f64 / labelled;
    for arch in Arch::ALL {
        let mean = (0..10)
            .map(|seed| train(&graph, &ModelConfig { arch, seed, ..cfg.model.clone() }).unwrap().1.test.accuracy)
            .sum::<f64>()
            / 10.0;
        assert!((mean - majority).abs() <= 0.10, "{arch}: mean accuracy {mean:.3} vs majority {majority:.3}");
    }
}

fn restograph(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_restograph")).args(args).env("RESTOGRAPH_LOG", "error").output().unwrap()
}

#[test]
fn binary_exit_codes() {
    assert_eq!(restograph(&["--help"]).status.code(), Some(0));
    assert_eq!(restograph(&["--version"]).status.code(), Some(0));
    assert_eq!(restograph(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(restograph(&["train", "--set", "model.epochs=x"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fx");
    let made = restograph(&["fixture", "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(made.status.code(), Some(0), "{}", String::from_utf8_lossy(&made.stderr));
    let config = out.join("restograph.conf");
    let config = config.to_str().unwrap();
    assert_eq!(restograph(&["-c", config, "--set", "walk.epochs=2", "build-entity-graphs"]).status.code(), Some(0));

    let failed = restograph(&["-c", config, "train"]);
    assert_eq!(failed.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&failed.stderr);
    assert!(stderr.contains("stage train failed"), "{stderr}");

    fs::remove_file(out.join("roads.txt")).unwrap();
    let missing = restograph(&["-c", config, "build-city-graph"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("roads.txt"));
}
