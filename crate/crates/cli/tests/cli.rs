//! End-to-end behaviour of the `navlab` binary.

use std::path::Path;
use std::process::{Command, Output};

use navlab_core::annot::synth::synth_corpus;
use serde_json::Value;
use tempfile::TempDir;

fn navlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_navlab"))
        .args(args)
        .env_remove("NAVLAB_SEED")
        .env_remove("NAVLAB_OUT")
        .output()
        .expect("spawn navlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_train_config(dir: &Path, steps: u64) -> String {
    let cfg = serde_json::json!({
        "train_episodes": {"kind": "sample", "n_per_stratum": 2},
        "probe_episodes": {"kind": "sample", "n_per_stratum": 1},
        "net": {"embed": 8, "hidden": 8},
        "train": {"total_env_steps": steps, "rollout_len": 16, "n_envs": 4, "probe_every": 2},
        "output_dir": dir.join("out").to_string_lossy(),
    });
    write(&dir.join("train.json"), &cfg.to_string())
}

#[test]
fn missing_or_invalid_input_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&navlab(&["run", "--config", "/nonexistent/config.json"])), 2);

    let bad_map = write(&tmp.path().join("bad.json"), r#"{"maps": ["builtin:no-such-map"]}"#);
    assert_eq!(code(&navlab(&["run", "--config", &bad_map])), 2);

    let unknown = write(&tmp.path().join("unknown.json"), r#"{"colour": "blue"}"#);
    assert_eq!(code(&navlab(&["run", "--config", &unknown])), 2);

    let cfg = small_train_config(tmp.path(), 64);
    let o = navlab(&["train", "--config", &cfg, "--sweep", "--resume", "x.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot be combined"));

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let manifest = write(&tmp.path().join("m.jsonl"), r#"{"id":"a","num_frames":3,"actions":["move_forward","move_forward","stop"],"instruction":"go","sub_instructions":["go"]}"#);
    let o = navlab(&["validate", "--manifest", &manifest, "--annotations", &empty.to_string_lossy(), "--out", "o"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_writes_hash_stamped_outputs_that_agree_with_the_log() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = serde_json::json!({
        "episodes": {"kind": "sample", "n_per_stratum": 2},
        "output_dir": out.to_string_lossy(),
    });
    let cfg = write(&tmp.path().join("run.json"), &cfg.to_string());
    let o = navlab(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let hash = summary["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(summary["sr_from_log"], summary["report"]["overall"]["sr"]);
    assert_eq!(summary["spl_from_log"], summary["report"]["overall"]["spl"]);

    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("split,difficulty,n,SR,SPL,config_hash"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(hash)));

    let log = std::fs::read_to_string(out.join("trajectories.jsonl")).unwrap();
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["type"], "header");
    assert_eq!(first["config_hash"], hash);

    let svg = tmp.path().join("ep.svg");
    let o = navlab(&[
        "render",
        "--log",
        &out.join("trajectories.jsonl").to_string_lossy(),
        "--map",
        "builtin:two-room",
        "--out",
        &svg.to_string_lossy(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(svg).unwrap();
    assert!(svg.contains("<polyline") && svg.contains(r#"id="goal""#));
}

#[test]
fn empty_log_renders_the_bare_map() {
    let tmp = TempDir::new().unwrap();
    let log = write(&tmp.path().join("empty.jsonl"), "");
    let svg = tmp.path().join("map.svg");
    let o = navlab(&["render", "--log", &log, "--map", "builtin:two-room", "--out", &svg.to_string_lossy()]);
    assert_eq!(code(&o), 0);
    let svg = std::fs::read_to_string(svg).unwrap();
    assert!(svg.contains("obstacles") && !svg.contains("<polyline"));
}

fn iterations(curve: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(curve).unwrap();
    text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect()
}

#[test]
fn resume_continues_the_curve() {
    let tmp = TempDir::new().unwrap();
    let first = small_train_config(tmp.path(), 128);
    assert_eq!(code(&navlab(&["train", "--config", &first])), 0);
    let ckpt = tmp.path().join("out/checkpoint.json");
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&ckpt).unwrap()).unwrap();
    assert_eq!(saved["format"], "navlab-checkpoint");
    assert_eq!(iterations(&tmp.path().join("out/curve.csv")), ["0", "1"]);

    let longer = tmp.path().join("longer");
    std::fs::create_dir(&longer).unwrap();
    let second = small_train_config(&longer, 256);
    let o = navlab(&["train", "--config", &second, "--resume", &ckpt.to_string_lossy()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(iterations(&longer.join("out/curve.csv")), ["2", "3"]);
}

#[test]
fn sweep_trains_one_run_per_weight() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_train_config(tmp.path(), 64);
    let o = navlab(&["train", "--config", &cfg, "--sweep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut hashes = std::collections::BTreeSet::new();
    for lw in ["1.0", "0.8", "0.6", "0.5", "0.4", "0.3", "0.2", "0.1"] {
        let dir = tmp.path().join(format!("out/lambda_w_{lw}"));
        let ck: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("checkpoint.json")).unwrap()).unwrap();
        hashes.insert(ck["config_hash"].as_str().unwrap().to_string());
        assert!(dir.join("curve.csv").exists());
    }
    assert_eq!(hashes.len(), 8);
}

#[test]
fn validate_and_make_dataset_on_a_synthetic_corpus() {
    let tmp = TempDir::new().unwrap();
    let items = synth_corpus(40, 3, 2, 5);
    let ann = tmp.path().join("ann");
    std::fs::create_dir(&ann).unwrap();
    let mut manifest = String::new();
    for it in &items {
        manifest += &serde_json::to_string(&it.record).unwrap();
        manifest.push('\n');
        std::fs::write(ann.join(format!("{}.txt", it.record.id)), &it.annotation).unwrap();
    }
    let manifest = write(&tmp.path().join("manifest.jsonl"), &manifest);
    let ann = ann.to_string_lossy().into_owned();

    let out = tmp.path().join("q");
    let o = navlab(&["validate", "--manifest", &manifest, "--annotations", &ann, "--out", &out.to_string_lossy()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let q = std::fs::read_to_string(out.join("quality.csv")).unwrap();
    let row: Vec<&str> = q.lines().nth(1).unwrap().split(',').collect();
    // 37 of 40 pass format, 35 of 37 pass temporal, no judge configured
    assert_eq!(&row[..5], ["40", "92.5", &(100.0 * 35.0 / 37.0).to_string(), "n/a", "35"]);

    let ds = tmp.path().join("ds");
    let o = navlab(&["make-dataset", "--manifest", &manifest, "--annotations", &ann, "--out", &ds.to_string_lossy()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(ds.join("dataset_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["labelled"], 35);
    assert_eq!(summary["skipped"]["format"], 3);
    assert_eq!(summary["skipped"]["temporal"], 2);
    let lines = std::fs::read_to_string(ds.join("samples.jsonl")).unwrap().lines().count();
    assert_eq!(summary["samples"], lines);

    let o = navlab(&["make-dataset", "--manifest", &manifest, "--annotations", &ann, "--window", "-1", "--out", "x"]);
    assert_eq!(code(&o), 2);
}
