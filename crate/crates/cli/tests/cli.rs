use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ivos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivos")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SPECS: &str = r#"[
  {"name": "slide", "width": 40, "height": 28, "frames": 6, "seed": 3,
   "objects": [{"id": 1, "shape": {"kind": "rect", "x": 4, "y": 5, "width": 10, "height": 8}, "velocity": [1, 0]}]},
  {"name": "still", "width": 40, "height": 28, "frames": 4,
   "objects": [{"id": 1, "shape": {"kind": "ellipse", "cx": 20, "cy": 14, "rx": 6, "ry": 5}, "velocity": [0, 0]},
               {"id": 2, "shape": {"kind": "rect", "x": 30, "y": 2, "width": 6, "height": 6}, "velocity": [0, 0]}]}
]"#;

fn synth_dataset(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, SPECS).unwrap();
    let root = dir.join("ds");
    let out = ivos(&["synth", "--spec", p(&spec), "--out", p(&root)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    root
}

#[test]
fn synth_writes_davis_layout() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_dataset(dir.path());
    assert!(root.join("JPEGImages/480p/slide/00005.jpg").is_file());
    assert!(root.join("Annotations/480p/still/00003.png").is_file());
}

#[test]
fn run_writes_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_dataset(dir.path());
    let report = dir.path().join("report.json");
    let out = ivos(&[
        "run",
        "--dataset-root",
        p(&root),
        "--report",
        p(&report),
        "--rounds",
        "4",
        "--strategy",
        "f2",
        "--workers",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["config"]["max_rounds"], 4);
    assert_eq!(json["config"]["strategy"], "f2");
    assert_eq!(json["partial"], false);
    assert_eq!(json["sequences"].as_array().unwrap().len(), 2);
    assert!(json["timing"].is_null());
    let auc = json["r_auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall R-AUC-J&F"));
}

#[test]
fn run_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_dataset(dir.path());
    let mut reports = Vec::new();
    for workers in ["1", "3"] {
        let report = dir.path().join(format!("r{workers}.json"));
        let out = ivos(&["run", "--dataset-root", p(&root), "--report", p(&report), "--workers", workers]);
        assert!(out.status.success());
        reports.push(fs::read(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn missing_sequence_is_reported_as_partial() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_dataset(dir.path());
    let report = dir.path().join("report.csv");
    let out = ivos(&[
        "run",
        "--dataset-root",
        p(&root),
        "--sequences",
        "still,ghost",
        "--report",
        p(&report),
    ]);
    assert!(out.status.success());
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("sequence,round,global_jf\n"));
    assert!(csv.lines().last().unwrap().starts_with("r_auc,,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ghost"));

    let json_report = dir.path().join("report.json");
    ivos(&["run", "--dataset-root", p(&root), "--sequences", "ghost,still", "--report", p(&json_report)]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json_report).unwrap()).unwrap();
    assert_eq!(json["partial"], true);
    assert_eq!(json["failures"][0]["name"], "ghost");
}

#[test]
fn all_sequences_failing_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_dataset(dir.path());
    let report = dir.path().join("report.json");
    let out = ivos(&["run", "--dataset-root", p(&root), "--sequences", "ghost", "--report", p(&report)]);
    assert!(!out.status.success());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_dataset(dir.path());
    let config = dir.path().join("config.json");
    let mut base = serde_json::to_value(ivos_default_config()).unwrap();
    base["max_clicks"] = 2.into();
    base["backends"]["propagator"] = "decay-oracle".into();
    fs::write(&config, base.to_string()).unwrap();
    let report = dir.path().join("report.json");
    let out = ivos(&[
        "run",
        "--dataset-root",
        p(&root),
        "--config",
        p(&config),
        "--fusion",
        "none",
        "--report",
        p(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["config"]["max_clicks"], 2);
    assert_eq!(json["config"]["backends"]["propagator"], "decay-oracle");
    assert_eq!(json["config"]["backends"]["fusion"], "none");
}

fn ivos_default_config() -> serde_json::Value {
    serde_json::json!({
        "strategy": "f3", "max_clicks": 3, "max_rounds": 8, "memory_stride": 5,
        "backends": {"interaction": "oracle", "propagator": "copy", "fusion": "distance-weighted",
                     "decay_lambda": 0.5, "color_tolerance": 24},
        "min_region_area": 0.001, "click_radius": null, "boundary_tolerance": null,
        "seed": 0, "timing": false, "time_budget_per_object_seconds": 30.0
    })
}

#[test]
fn invalid_options_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_dataset(dir.path());
    let report = dir.path().join("r.json");
    for extra in [["--strategy", "f9"], ["--memory-stride", "0"], ["--max-clicks", "0"]] {
        let mut args = vec!["run", "--dataset-root", p(&root), "--report", p(&report)];
        args.extend(extra);
        let out = ivos(&args);
        assert!(!out.status.success(), "{extra:?} accepted");
    }
}

#[test]
fn score_compares_directories() {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_dataset(dir.path());
    let ann = root.join("Annotations/480p");
    let out = ivos(&["score", "--pred-root", p(&ann), "--gt-root", p(&ann)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let mean = stdout.lines().find(|l| l.starts_with("mean")).unwrap();
    assert!(mean.ends_with("1.0000"), "{mean}");
}
