use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
countries = ["US", "DE"]
seed = 4
classifiers = ["LG", "XG"]

[synth]
days = 400
records_per_day = 10
spillover = 0.5
"#;

fn beirnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beirnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run_stages(config: &Path, out: &Path, stages: &[&str], extra: &[&str]) {
    for s in stages {
        let mut args = vec![*s, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = beirnet(&args);
        assert_eq!(o.status.code(), Some(0), "{s} failed: {}", stderr(&o));
    }
}

const ALL: [&str; 8] = ["synth", "ingest", "aggregate", "preprocess", "features", "evaluate", "granger", "report"];

fn artifacts(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v = Vec::new();
    for stage in ["report", "granger"] {
        let mut names: Vec<PathBuf> = std::fs::read_dir(out.join(stage)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            v.push((format!("{stage}/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).unwrap()));
        }
    }
    v
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(beirnet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(beirnet(&["ingest", "--jobs", "many"]).status.code(), Some(1));
    assert_eq!(beirnet(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nunknown_key = 2\n");
    let o = beirnet(&["synth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown_key"), "{}", stderr(&o));
    let o = beirnet(&["synth", "--country", "FR", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_before_features_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = beirnet(&["evaluate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run `beirnet features` first"), "{}", stderr(&o));
}

#[test]
fn missing_gkg_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[paths]\ngkg = [\"nowhere.tsv\"]\n");
    let o = beirnet(&["ingest", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_stages(&cfg, &a, &["synth"], &[]);
    run_stages(&cfg, &b, &["synth"], &[]);
    for f in ["synth/gkg.tsv", "synth/market.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    run_stages(&cfg, &c, &["synth"], &["--seed", "5"]);
    assert_ne!(std::fs::read(a.join("synth/market.csv")).unwrap(), std::fs::read(c.join("synth/market.csv")).unwrap());
}

#[test]
fn full_pipeline_is_byte_identical_and_detects_staleness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_stages(&cfg, &a, &ALL, &["--jobs", "1"]);
    run_stages(&cfg, &b, &ALL, &["--jobs", "3"]);

    let got = artifacts(&a);
    let names: Vec<&str> = got.iter().map(|(n, _)| n.as_str()).collect();
    for expect in [
        "report/table1_delta_f1.csv",
        "report/table8_mcnemar_p.csv",
        "report/summary.md",
        "granger/graph.graphml",
        "granger/graph.dot",
        "granger/predecessors.json",
        "granger/predecessors.csv",
    ] {
        assert!(names.contains(&expect), "missing {expect}");
    }
    assert_eq!(got, artifacts(&b));

    // every artifact is reachable from the manifest by hash
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    for stage in ALL {
        let outputs = manifest["stages"][stage]["outputs"].as_object().unwrap();
        assert!(!outputs.is_empty(), "{stage}");
    }
    let delta = &manifest["stages"]["report"]["outputs"]["report/table1_delta_f1.csv"];
    assert!(delta.is_string());

    // US and DE markets (3 + 4), 3 commodities, 2 x 5 components
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("granger/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["nodes"], 20);

    // touching an upstream artifact makes downstream stages refuse to run
    let ds = a.join("preprocess/US_dataset.json");
    let mut text = std::fs::read(&ds).unwrap();
    text.push(b'\n');
    std::fs::write(&ds, text).unwrap();
    let o = beirnet(&["features", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stale pipeline"), "{}", stderr(&o));
    assert!(stderr(&o).contains("beirnet preprocess"), "{}", stderr(&o));
    // rerunning the stale stage restores the chain with identical outputs
    run_stages(&cfg, &a, &["preprocess", "features"], &[]);
    let o = beirnet(&["report", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
