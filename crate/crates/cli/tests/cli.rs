use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn hdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdc"))
        .args(args)
        .env_remove("HDC_SCORER_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, config: Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn predictions(report: &Value) -> Vec<(String, String)> {
    report["images"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["image_id"].as_str().unwrap().to_string(),
                r["prediction"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn tree_stats_on_imagenet_fixture() {
    let out = stdout(&hdc(&["tree", "stats", s(&fixture("imagenet_like.json"))]));
    assert!(out.starts_with("depth=7 leaves=1000 "), "{out}");
    assert!(out.contains("branching:"));
}

#[test]
fn validate_reports_cycle() {
    let out = hdc(&["tree", "validate", s(&fixture("cyclic.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cycle"));

    let ok = stdout(&hdc(&["tree", "validate", s(&fixture("cifar100_like.txt"))]));
    assert!(ok.contains("depth=3 leaves=100"));
}

#[test]
fn limit_depth_keeps_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("limited.json");
    stdout(&hdc(&[
        "tree",
        "limit-depth",
        "--max",
        "3",
        s(&fixture("imagenet_like.json")),
        s(&out),
    ]));
    let stats = stdout(&hdc(&["tree", "stats", s(&out)]));
    assert!(stats.starts_with("depth=3 leaves=1000 "), "{stats}");
}

#[test]
fn insert_and_remove_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let added = dir.path().join("added.txt");
    let msg = stdout(&hdc(&[
        "tree",
        "insert",
        s(&fixture("small8.json")),
        s(&added),
        "--label",
        "zebra",
    ]));
    assert!(msg.contains("under \"entity\""));
    assert!(stdout(&hdc(&["tree", "stats", s(&added)])).starts_with("depth=2 leaves=9 "));

    let removed = dir.path().join("removed.json");
    stdout(&hdc(&["tree", "remove", s(&added), s(&removed), "--label", "zebra"]));
    assert!(stdout(&hdc(&["tree", "stats", s(&removed)])).starts_with("depth=2 leaves=8 "));

    let dup = hdc(&["tree", "insert", s(&removed), s(&added), "--label", "cat"]);
    assert_eq!(dup.status.code(), Some(2));
}

#[test]
fn greedy_insert_from_replay_probe() {
    let dir = tempfile::tempdir().unwrap();
    let probe = dir.path().join("probe.json");
    std::fs::write(
        &probe,
        json!({"images": [{"image_id": "z1"}, {"image_id": "z2"}]}).to_string(),
    )
    .unwrap();
    // Two probe samples, as drawn by seed 0; "animal" scores lower than "tool".
    let samples = hdc_core::scoring::SampleSet::build(0, 2, 1000).unwrap();
    let mut rows = Vec::new();
    for image in ["z1", "z2"] {
        for sample in samples.iter() {
            for (label, error) in [("animal", 0.2), ("tool", 0.6)] {
                rows.push(json!({"image_id": image, "label": label, "t": sample.t,
                                 "noise_id": sample.noise_id, "error": error}));
            }
        }
    }
    let matrix = dir.path().join("probe_matrix.json");
    std::fs::write(&matrix, Value::Array(rows).to_string()).unwrap();
    let out = dir.path().join("greedy.json");
    let msg = stdout(&hdc(&[
        "tree",
        "insert",
        s(&fixture("small8.json")),
        s(&out),
        "--label",
        "zebra",
        "--greedy",
        "--probe",
        s(&probe),
        "--matrix",
        s(&matrix),
        "--samples",
        "2",
    ]));
    assert!(msg.contains("under \"animal\""), "{msg}");
}

#[test]
fn gen_synthetic_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        stdout(&hdc(&[
            "gen-synthetic",
            "--tree",
            s(&fixture("small8.json")),
            "--per-class",
            "2",
            "--seed",
            "3",
            "--out",
            s(out),
        ]));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_json(&a)["images"].as_array().unwrap().len(), 16);

    let big = stdout(&hdc(&[
        "gen-synthetic",
        "--tree",
        s(&fixture("imagenet_like.json")),
        "--per-class",
        "1",
    ]));
    let data: Value = serde_json::from_str(&big).unwrap();
    let images = data["images"].as_array().unwrap();
    assert_eq!(images.len(), 1000);
    let classes: std::collections::BTreeSet<&str> =
        images.iter().map(|i| i["true_class"].as_str().unwrap()).collect();
    assert_eq!(classes.len(), 1000);
}

#[test]
fn flat_run_reports_leaves_times_samples() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "flat.json",
        json!({
            "tree_path": fixture("small8.json"),
            "dataset": {"kind": "synthetic", "per_class": 1, "seed": 1},
            "scorer": {"kind": "synthetic"},
            "method": "flat",
            "m_final": 2,
            "output_dir": "flat-out"
        }),
    );
    let summary = stdout(&hdc(&["run", "--config", s(&config)]));
    assert!(summary.starts_with("method,images,top1"));
    let report = read_json(&dir.path().join("flat-out/report.json"));
    assert_eq!(report["image_count"], 8);
    assert_eq!(report["mean_calls_per_image"], 16.0);
    assert_eq!(report["top_k_overall"]["1"], 100.0);
    assert!(dir.path().join("flat-out/confusion.csv").exists());
    assert!(dir.path().join("flat-out/per_class.csv").exists());
    assert!(!dir.path().join("flat-out/traces").exists());
}

fn noisy_config(tree: PathBuf, method: &str, out: &str, hdc: Value) -> Value {
    json!({
        "tree_path": tree,
        "dataset": {"kind": "synthetic", "per_class": 2, "seed": 11},
        "scorer": {"kind": "synthetic", "params": {"noise_sigma": 0.6, "seed": 5}},
        "method": method,
        "m_final": 8,
        "sample_seed": 21,
        "hdc": hdc,
        "output_dir": out
    })
}

#[test]
fn hdc_without_pruning_matches_flat() {
    let dir = tempfile::tempdir().unwrap();
    let keep_all = json!({"strategy": {"kind": "fixed_topk", "default_ratio": 1.0}});
    let flat = write_config(
        dir.path(),
        "flat.json",
        noisy_config(fixture("synthetic27.json"), "flat", "flat", keep_all.clone()),
    );
    let hdc_cfg = write_config(
        dir.path(),
        "hdc.json",
        noisy_config(fixture("synthetic27.json"), "hdc", "hdc", keep_all),
    );
    stdout(&hdc(&["run", "--config", s(&flat)]));
    stdout(&hdc(&["run", "--config", s(&hdc_cfg)]));
    let a = read_json(&dir.path().join("flat/report.json"));
    let b = read_json(&dir.path().join("hdc/report.json"));
    assert_eq!(predictions(&a), predictions(&b));
    assert!(a["top_k_overall"]["1"].as_f64().unwrap() < 100.0, "noise should cause some errors");
}

#[test]
fn runs_are_deterministic_and_traced() {
    let dir = tempfile::tempdir().unwrap();
    let hdc_section = json!({"start_level": 2, "strategy": {"kind": "fixed_topk", "default_ratio": 0.5}});
    let config = write_config(
        dir.path(),
        "hdc.json",
        noisy_config(fixture("synthetic27.json"), "hdc", "one", hdc_section),
    );
    stdout(&hdc(&["run", "--config", s(&config), "--workers", "1"]));
    stdout(&hdc(&["run", "--config", s(&config), "--workers", "4", "--output-dir", s(&dir.path().join("two"))]));
    let one = std::fs::read(dir.path().join("one/report.json")).unwrap();
    let two = std::fs::read(dir.path().join("two/report.json")).unwrap();
    assert_eq!(one, two);

    let traces: Vec<_> = std::fs::read_dir(dir.path().join("one/traces"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(traces.len(), 54);
    for path in traces {
        let trace = read_json(&path);
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("two/traces").join(path.file_name().unwrap())).unwrap()
        );
        for level in trace["levels"].as_array().unwrap() {
            let candidates: Vec<&Value> = level["candidates"]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| &c["node"])
                .collect();
            for kept in level["kept"].as_array().unwrap() {
                assert!(candidates.contains(&kept));
            }
        }
    }
}

#[test]
fn imagenet_pair_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let base = json!({
        "tree_path": fixture("imagenet_like.json"),
        "dataset": {"kind": "synthetic", "per_class": 1, "seed": 2},
        "scorer": {"kind": "synthetic"},
        "m_final": 16,
        "hdc": {"start_level": 3}
    });
    let mut flat = base.clone();
    flat["method"] = json!("flat");
    flat["output_dir"] = json!("flat");
    let mut hdc_run = base;
    hdc_run["method"] = json!("hdc");
    hdc_run["output_dir"] = json!("hdc");
    let flat_cfg = write_config(dir.path(), "flat.json", flat);
    let hdc_cfg = write_config(dir.path(), "hdc.json", hdc_run);
    stdout(&hdc(&["run", "--config", s(&flat_cfg)]));
    stdout(&hdc(&["run", "--config", s(&hdc_cfg)]));

    let report = read_json(&dir.path().join("hdc/report.json"));
    assert!(report["speedup_vs_baseline"].as_f64().unwrap() >= 30.0);
    assert_eq!(report["top_k_overall"]["1"], 100.0);

    let flat_report = dir.path().join("flat/report.json");
    let hdc_report = dir.path().join("hdc/report.json");
    let cmp_dir = dir.path().join("cmp");
    let table = stdout(&hdc(&["compare", s(&flat_report), s(&hdc_report), "--out", s(&cmp_dir)]));
    assert!(table.contains("speed-up:"));
    let comparison = read_json(&cmp_dir.join("comparison.json"));
    assert!(comparison["speedup"].as_f64().unwrap() >= 35.0);
    assert!(cmp_dir.join("comparison.csv").exists());

    let same = stdout(&hdc(&["compare", s(&flat_report), s(&flat_report)]));
    assert!(same.contains("speed-up: 0.00%"));

    let confusion = stdout(&hdc(&[
        "confusion",
        "--report",
        s(&hdc_report),
        "--tree",
        s(&fixture("imagenet_like.json")),
        "--synset",
        "transport vehicle",
    ]));
    let header = confusion.lines().next().unwrap();
    assert!(header.ends_with(",other"));
    assert_eq!(confusion.lines().count(), 62);
}

fn report_with_cost(hash: &str, method: &str, calls: u64) -> Value {
    json!({
        "method": method,
        "dataset_hash": hash,
        "image_count": 1,
        "leaf_count": 100,
        "top_k_overall": {"1": 100.0, "3": 100.0, "5": 100.0},
        "top1_classwise": 100.0,
        "mean_calls_per_image": calls as f64,
        "baseline_calls_per_image": 1600.0,
        "speedup_vs_baseline": 0.0,
        "mean_surviving_leaves": 1.0,
        "per_class": {},
        "confusion": [],
        "images": []
    })
}

#[test]
fn compare_table_one_costs_and_hash_guard() {
    let dir = tempfile::tempdir().unwrap();
    let flat = write_config(dir.path(), "flat.json", report_with_cost("h", "flat", 1600));
    let dyn_run = write_config(dir.path(), "dyn.json", report_with_cost("h", "hdc", 650));
    let fixed = write_config(dir.path(), "fixed.json", report_with_cost("h", "hdc", 980));
    let other = write_config(dir.path(), "other.json", report_with_cost("g", "hdc", 650));
    assert!(stdout(&hdc(&["compare", s(&flat), s(&dyn_run)])).contains("speed-up: 59.38%"));
    assert!(stdout(&hdc(&["compare", s(&flat), s(&fixed)])).contains("speed-up: 38.75%"));
    let out = hdc(&["compare", s(&flat), s(&other)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different datasets"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(hdc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hdc(&["run", "--config", "/nonexistent/exp.json"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.json",
        json!({"tree_path": fixture("small8.json"), "dataset": {"kind": "synthetic", "per_class": 1, "seed": 0},
               "scorer": {"kind": "synthetic"}, "m_final": 0, "output_dir": "x"}),
    );
    assert_eq!(hdc(&["run", "--config", s(&bad)]).status.code(), Some(1));
    assert_eq!(hdc(&["--help"]).status.code(), Some(0));
}

const MOCK_SERVER: &str = r#"import json, sys
rows = json.load(open(sys.argv[1]))
table = {(r["image_id"], r["label"], r["t"], r["noise_id"]): r["error"] for r in rows}
print(json.dumps({"protocol": "hdc-scorer/1"}), flush=True)
for line in sys.stdin:
    try:
        req = json.loads(line)
    except ValueError:
        print(json.dumps({"id": -1, "fault": "malformed"}), flush=True)
        continue
    key = (req["image_id"], req["label"], req["t"], req["noise_id"])
    if key in table:
        print(json.dumps({"id": req["id"], "error": table[key]}), flush=True)
    else:
        print(json.dumps({"id": req["id"], "fault": "unknown key"}), flush=True)
"#;

#[test]
fn record_replay_and_remote_agree() {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 unavailable, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let hdc_section = json!({"start_level": 2, "strategy": {"kind": "dynamic_sigma"}});
    let mut recorded = noisy_config(fixture("synthetic27.json"), "hdc", "synthetic", hdc_section.clone());
    recorded["record_matrix"] = json!("matrix.json");
    let recorded = write_config(dir.path(), "record.json", recorded);
    stdout(&hdc(&["run", "--config", s(&recorded)]));

    let mut replay = noisy_config(fixture("synthetic27.json"), "hdc", "replay", hdc_section.clone());
    replay["scorer"] = json!({"kind": "replay", "matrix_path": "matrix.json"});
    let replay = write_config(dir.path(), "replay.json", replay);
    stdout(&hdc(&["run", "--config", s(&replay)]));

    let server = dir.path().join("server.py");
    std::fs::write(&server, MOCK_SERVER).unwrap();
    let mut remote = noisy_config(fixture("synthetic27.json"), "hdc", "remote", hdc_section);
    remote["scorer"] = json!({"kind": "remote", "endpoint": "tcp://127.0.0.1:1"});
    let remote = write_config(dir.path(), "remote.json", remote);
    let endpoint = format!("exec:python3 {} {}", s(&server), s(&dir.path().join("matrix.json")));
    let out = Command::new(env!("CARGO_BIN_EXE_hdc"))
        .args(["run", "--config", s(&remote)])
        .env("HDC_SCORER_ENDPOINT", &endpoint)
        .output()
        .unwrap();
    stdout(&out);

    let reference = std::fs::read(dir.path().join("synthetic/report.json")).unwrap();
    for run in ["replay", "remote"] {
        assert_eq!(reference, std::fs::read(dir.path().join(run).join("report.json")).unwrap(), "{run}");
        for entry in std::fs::read_dir(dir.path().join("synthetic/traces")).unwrap() {
            let path = entry.unwrap().path();
            let other = dir.path().join(run).join("traces").join(path.file_name().unwrap());
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(other).unwrap());
        }
    }
}
