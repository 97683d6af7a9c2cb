//! End-to-end checks of the command-line interface: files written and
//! registered, report formats agreeing with each other, flag overrides, and
//! the exit-code taxonomy.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairscl"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).expect("config written");
    path
}

fn small_config_body(seed: u64) -> String {
    format!(
        r#"{{
  "data": {{"source": "synthetic", "synthetic": {{"n": 200}}}},
  "methods": ["erm", "proposed"],
  "train": {{"pretrain_epochs": 1, "finetune_epochs": 1, "hidden": [8], "embed_dim": 4}},
  "bootstrap_replicates": 30,
  "seed": {seed}
}}"#
    )
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn sha256_hex(path: &Path) -> String {
    let bytes = fs::read(path).expect("file readable");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let mut out = String::with_capacity(64);
    for byte in hasher.finalize() {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[test]
fn a_full_run_writes_and_registers_every_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config_body(2));
    let out_dir = tmp.path().join("out");

    let output = run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "json,markdown,delimited",
    ]);

    let stdout = String::from_utf8_lossy(&output.stdout);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_object().unwrap();

    let expected = [
        "checkpoints/erm.bin",
        "checkpoints/proposed.bin",
        "dataset.csv",
        "report.csv",
        "report.json",
        "report.md",
    ];
    assert_eq!(files.len(), expected.len());
    for name in expected {
        assert!(files.contains_key(name), "manifest is missing {name}");
        assert!(out_dir.join(name).is_file(), "{name} was not written");
        assert!(stdout.contains(name), "stdout does not announce {name}");
    }
    assert!(manifest["failures"].as_array().unwrap().is_empty());

    // Checkpoints and the dataset are hashed as raw bytes; recompute and
    // compare. (Report hashes are timestamp-normalized, covered elsewhere.)
    for name in ["checkpoints/erm.bin", "checkpoints/proposed.bin", "dataset.csv"] {
        assert_eq!(
            files[name].as_str().unwrap(),
            sha256_hex(&out_dir.join(name)),
            "manifest hash of {name} does not match the file"
        );
    }
}

#[test]
fn markdown_and_delimited_reports_agree_with_the_json_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config_body(5));
    let out_dir = tmp.path().join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "json,markdown,delimited",
    ]);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let markdown = fs::read_to_string(out_dir.join("report.md")).unwrap();

    // Every cell's interval estimates appear in the markdown verbatim in the
    // fixed `point (low-high)` rendering.
    for cell in report["cells"].as_array().unwrap() {
        for metric in ["overall_auc", "delta_marginal_auc"] {
            let v = &cell[metric];
            let rendered = format!(
                "{:.4} ({:.4}-{:.4})",
                v["point"].as_f64().unwrap(),
                v["ci_low"].as_f64().unwrap(),
                v["ci_high"].as_f64().unwrap()
            );
            assert!(
                markdown.contains(&rendered),
                "markdown lacks the {metric} estimate {rendered}"
            );
        }
    }

    // The delimited rows carry full-precision points equal to the JSON ones.
    let csv_text = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    for cell in report["cells"].as_array().unwrap() {
        let method = cell["method"].as_str().unwrap();
        let attribute = cell["attribute"].as_str().unwrap();
        let point = cell["overall_auc"]["point"].as_f64().unwrap();
        let row = csv_text
            .lines()
            .find(|l| l.starts_with(&format!("{attribute},{method},overall_auc,")))
            .unwrap_or_else(|| panic!("no overall_auc row for {method}"));
        let field: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(field, point, "delimited point for {method} drifted");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config_body(2));
    let out_dir = tmp.path().join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--methods",
        "erm",
        "--seed",
        "9",
        "--bootstrap",
        "25",
        "--format",
        "json",
    ]);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 9);
    let files = manifest["files"].as_object().unwrap();
    assert!(files.contains_key("checkpoints/erm.bin"));
    assert!(!files.contains_key("checkpoints/proposed.bin"));
    assert!(!files.contains_key("report.md"), "only json was requested");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["methods"].as_array().unwrap().len(), 1);
    assert_eq!(report["provenance"]["bootstrap"]["replicates"], 25);
}

#[test]
fn the_emitted_dataset_round_trips_through_the_file_source() {
    let tmp = TempDir::new().unwrap();
    let gen_cfg = write_config(tmp.path(), &small_config_body(3));
    let gen_dir = tmp.path().join("generated");
    run_ok(&[
        "generate",
        "--config",
        gen_cfg.to_str().unwrap(),
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    let dataset = gen_dir.join("dataset.csv");
    assert!(dataset.is_file());

    let file_cfg = tmp.path().join("file_config.json");
    fs::write(
        &file_cfg,
        format!(
            r#"{{
  "data": {{"source": "file", "path": {:?}}},
  "methods": ["erm"],
  "train": {{"pretrain_epochs": 1, "finetune_epochs": 1, "hidden": [8], "embed_dim": 4}},
  "bootstrap_replicates": 20,
  "formats": ["json"],
  "seed": 3
}}"#,
            dataset.to_str().unwrap()
        ),
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    run_ok(&["run", "--config", file_cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out_dir.join("report.json").is_file());
}

#[test]
fn exit_codes_follow_the_error_taxonomy() {
    let tmp = TempDir::new().unwrap();

    // Unreadable configuration: exit 2.
    let missing = tmp.path().join("nope.json");
    let out = bin()
        .args(["run", "--config", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    // Unparseable configuration: exit 2.
    let broken = write_config(tmp.path(), "{ not json");
    let out = bin().args(["run", "--config", broken.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // A data file without the mandatory columns: exit 3.
    let bad_csv = tmp.path().join("bad.csv");
    fs::write(&bad_csv, "id,feature\n1,0.5\n").unwrap();
    let data_cfg = tmp.path().join("data_config.json");
    fs::write(
        &data_cfg,
        format!(
            r#"{{"data": {{"source": "file", "path": {:?}}}, "methods": ["erm"], "seed": 1}}"#,
            bad_csv.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = bin()
        .args([
            "run",
            "--config",
            data_cfg.to_str().unwrap(),
            "--out",
            tmp.path().join("o3").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // A perfectly confounded audit set — every positive in one category,
    // every negative in the other — leaves the per-category metrics
    // undefined in every resample: exit 3 through the bootstrap.
    let mut rows = String::from("id,group,label,f0\n");
    for i in 0..12 {
        rows.push_str(&format!("a{i},A,1,0.{i}\n"));
        rows.push_str(&format!("b{i},B,0,0.{i}\n"));
    }
    let confounded_csv = tmp.path().join("confounded.csv");
    fs::write(&confounded_csv, rows).unwrap();
    let conf_cfg = tmp.path().join("conf_config.json");
    fs::write(
        &conf_cfg,
        format!(
            r#"{{
  "data": {{"source": "file", "path": {:?}}},
  "methods": ["erm"],
  "train": {{"pretrain_epochs": 1, "finetune_epochs": 1, "hidden": [4], "embed_dim": 2, "batch_size": 4}},
  "bootstrap_replicates": 10,
  "test_fraction": 0.5,
  "seed": 1
}}"#,
            confounded_csv.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = bin()
        .args([
            "run",
            "--config",
            conf_cfg.to_str().unwrap(),
            "--out",
            tmp.path().join("o3b").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // Training that cannot proceed on any cell: exit 4. Features around
    // 1e200 are finite (so the table loads) but the first contrastive
    // forward pass overflows the embedding norm.
    let mut rows = String::from("id,group,label,f0\n");
    for i in 0..6 {
        for (g, y) in [("A", 0), ("A", 1), ("B", 0), ("B", 1)] {
            rows.push_str(&format!("{g}{y}{i},{g},{y},1e200\n"));
        }
    }
    let huge_csv = tmp.path().join("huge.csv");
    fs::write(&huge_csv, rows).unwrap();
    let train_cfg = tmp.path().join("train_config.json");
    fs::write(
        &train_cfg,
        format!(
            r#"{{
  "data": {{"source": "file", "path": {:?}}},
  "methods": ["proposed"],
  "train": {{"pretrain_epochs": 1, "finetune_epochs": 1, "hidden": [4], "embed_dim": 2, "batch_size": 8}},
  "bootstrap_replicates": 10,
  "test_fraction": 0.5,
  "seed": 1
}}"#,
            huge_csv.to_str().unwrap()
        ),
    )
    .unwrap();
    let out4 = tmp.path().join("o4");
    let out = bin()
        .args(["run", "--config", train_cfg.to_str().unwrap(), "--out", out4.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // The failure trail survives in the manifest: the training failure
    // first, the run-level summary last.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out4.join("manifest.json")).unwrap()).unwrap();
    let failures = manifest["failures"].as_array().unwrap();
    assert!(failures.len() >= 2);
    assert_eq!(failures[0]["stage"], "train");
    assert_eq!(failures[0]["method"], "proposed");
    assert_eq!(failures.last().unwrap()["stage"], "run");

    // An output location that cannot be a directory: exit 5.
    let occupied = tmp.path().join("occupied");
    fs::write(&occupied, "a file, not a directory").unwrap();
    let cfg = write_config(tmp.path(), &small_config_body(1));
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", occupied.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_reproduce_every_registered_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config_body(7));
    let args = |dir: &Path| {
        vec![
            "run".to_string(),
            "--config".into(),
            cfg.to_str().unwrap().into(),
            "--out".into(),
            dir.to_str().unwrap().into(),
            "--format".into(),
            "json,markdown,delimited".into(),
        ]
    };
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    run_ok(&args(&dir_a).iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&args(&dir_b).iter().map(String::as_str).collect::<Vec<_>>());

    let manifest = |dir: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
    };
    let (a, b) = (manifest(&dir_a), manifest(&dir_b));
    // Identical configuration, identical registered hashes — the report
    // hashes are normalized over the generation timestamp, so this holds
    // even across the wall clock.
    assert_eq!(a["files"], b["files"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
}
