use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn wbmia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbmia"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn small_config() -> Value {
    json!({
        "dataset": { "source": "synthetic", "classes": 4, "features": 6, "records": 160 },
        "target": { "optimizer": { "epochs": 30 } },
        "attacks": [
            { "kind": "naive" },
            { "kind": "omniscient" },
            { "kind": "bayes_wb", "proxies": { "count": 2 } }
        ],
        "alphas": [0.9],
        "repetitions": 3,
        "master_seed": 11
    })
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config_hash_of(manifest: &Path) -> (String, u64) {
    let m: Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    (m["config_hash"].as_str().unwrap().to_string(), m["master_seed"].as_u64().unwrap())
}

#[test]
fn missing_dataset_path_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["dataset"] = json!({ "source": "json", "path": "nowhere/data.json" });
    cfg["attacks"] = json!([{ "kind": "naive" }]);
    let config = write_config(dir.path(), "cfg.json", &cfg);
    let out = wbmia(&["run", "--config", s(&config), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("dataset.path"), "{}", stderr(&out));
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["repetitions"] = json!(1);
    let config = write_config(dir.path(), "cfg.json", &cfg);
    let out = wbmia(&["run", "--config", s(&config), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("repetitions"), "{}", stderr(&out));

    cfg["repetitions"] = json!(3);
    cfg["bogus"] = json!(true);
    let config = write_config(dir.path(), "cfg.json", &cfg);
    let out = wbmia(&["run", "--config", s(&config), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"), "{}", stderr(&out));
}

#[test]
fn unreadable_data_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("data.csv"), "a,b,label\n1,x,0\n2,3,1\n").unwrap();
    let mut cfg = small_config();
    cfg["dataset"] = json!({ "source": "csv", "path": "data.csv", "label_column": "label" });
    cfg["attacks"] = json!([{ "kind": "naive" }]);
    let config = write_config(dir.path(), "cfg.json", &cfg);
    let out = wbmia(&["run", "--config", s(&config), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn rerun_gives_identical_csv_and_inputs_stay_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &small_config());
    let before = std::fs::read(&config).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, jobs) in [(&a, "1"), (&b, "2")] {
        let o = wbmia(&["run", "--config", s(&config), "--out-dir", s(out), "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ca = std::fs::read(a.join("results.csv")).unwrap();
    assert!(!ca.is_empty());
    assert_eq!(ca, std::fs::read(b.join("results.csv")).unwrap());
    assert_eq!(before, std::fs::read(&config).unwrap());
}

#[test]
fn mirrored_flags_conflict_unless_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &small_config());
    let out = dir.path().join("out");
    let o = wbmia(&["gen-data", "--config", s(&config), "--out-dir", s(&out), "--master-seed", "12"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("master_seed"));

    // agreeing value is not a conflict
    let o = wbmia(&["gen-data", "--config", s(&config), "--out-dir", s(&out), "--master-seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = wbmia(&[
        "gen-data",
        "--config",
        s(&config),
        "--out-dir",
        s(&out),
        "--master-seed",
        "12",
        "--override",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(config_hash_of(&out.join("gen-data-manifest.json")).1, 12);
}

#[test]
fn refuses_to_overwrite_an_input() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "results.csv", &small_config());
    let before = std::fs::read(&config).unwrap();
    let o = wbmia(&["run", "--config", s(&config), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(before, std::fs::read(&config).unwrap());
}

fn check_artifact(path: &Path, hash: &str, seed: u64) {
    let name = path.display().to_string();
    if name.ends_with(".csv") {
        let mut r = csv::Reader::from_path(path).unwrap();
        let headers = r.headers().unwrap().clone();
        let hi = headers.iter().position(|h| h == "config_hash").expect("config_hash column");
        let si = headers.iter().position(|h| h == "master_seed").expect("master_seed column");
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec.unwrap();
            assert_eq!(&rec[hi], hash, "{name}");
            assert_eq!(rec[si].parse::<u64>().unwrap(), seed, "{name}");
            rows += 1;
        }
        assert!(rows > 0, "{name} has no rows");
    } else {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        let p = v.get("provenance").unwrap_or(&v);
        assert_eq!(p["config_hash"].as_str(), Some(hash), "{name}");
        assert_eq!(p["master_seed"].as_u64(), Some(seed), "{name}");
    }
}

#[test]
fn every_output_records_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &small_config());
    let out = dir.path().join("out");
    let c = s(&config);
    let o = s(&out);
    let steps: Vec<Vec<&str>> = vec![
        vec!["gen-data", "--config", c, "--out-dir", o],
        vec!["train-target", "--config", c, "--out-dir", o, "--repetition", "1"],
        vec!["run", "--config", c, "--out-dir", o],
    ];
    for args in &steps {
        let r = wbmia(args);
        assert_eq!(r.status.code(), Some(0), "{args:?}: {}", stderr(&r));
    }
    let target = out.join("target.json");
    let attack_dir = dir.path().join("attack");
    let r = wbmia(&[
        "attack",
        "--config",
        c,
        "--out-dir",
        s(&attack_dir),
        "--attack",
        "bayes_wb",
        "--repetition",
        "1",
        "--target",
        s(&target),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let cal_dir = dir.path().join("cal");
    let r = wbmia(&[
        "calibrate",
        "--config",
        c,
        "--out-dir",
        s(&cal_dir),
        "--attack-model",
        s(&attack_dir.join("attack.json")),
        "--repetition",
        "1",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));

    let mut seen = std::collections::HashSet::new();
    for (d, cmd) in [
        (&out, "gen-data"),
        (&out, "train-target"),
        (&out, "run"),
        (&attack_dir, "attack"),
        (&cal_dir, "calibrate"),
    ] {
        let manifest = d.join(format!("{cmd}-manifest.json"));
        let (hash, seed) = config_hash_of(&manifest);
        assert_eq!(seed, 11);
        let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
        assert_eq!(m["command"], json!(cmd));
        for a in m["artifacts"].as_array().unwrap() {
            let path = d.join(a["path"].as_str().unwrap());
            assert!(seen.insert(path.clone()), "{} listed twice", path.display());
            check_artifact(&path, &hash, seed);
        }
    }
    // every file on disk is listed by exactly one manifest
    for d in [&out, &attack_dir, &cal_dir] {
        for entry in std::fs::read_dir(d).unwrap() {
            let p = entry.unwrap().path();
            let is_manifest = p.to_str().unwrap().ends_with("-manifest.json");
            assert!(is_manifest || seen.contains(&p), "{} is unlisted", p.display());
        }
    }

    // the stand-alone attack and calibration reproduce the run's rows
    let run_rows = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let cal_rows = std::fs::read_to_string(cal_dir.join("calibration_results.csv")).unwrap();
    for line in cal_rows.lines().skip(1) {
        assert!(run_rows.lines().any(|l| l == line), "{line} not in run results");
    }
}

#[test]
fn one_cell_sweep_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["attacks"] = json!([{ "kind": "general_wb", "splits": 2, "optimizer": { "epochs": 5 } }]);
    let config = write_config(dir.path(), "cfg.json", &cfg);
    let out = dir.path().join("out");
    let r = wbmia(&[
        "sweep",
        "--config",
        s(&config),
        "--out-dir",
        s(&out),
        "--n-d",
        "0",
        "--n-m",
        "0",
        "--validation-rounds",
        "1",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let mut reader = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<_> = reader.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 1);
    let selected = reader.headers().unwrap().iter().position(|h| h == "selected").unwrap();
    assert_eq!(&rows[0][selected], "true");
}

#[test]
fn empty_grid_is_rejected_by_clap() {
    let o = wbmia(&["sweep", "--config", "x.json", "--n-m", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
