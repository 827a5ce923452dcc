use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cool")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const SPEC: &str = r#"{
  "dataset": {
    "generator": {"kind": "two_moons", "per_class": 60, "noise_std": 0.15},
    "noise": {"kind": "symmetric", "rate": 0.3}
  },
  "methods": ["standard", "cool"],
  "config": {"epochs": 5, "start_epoch": 2, "hidden": [8]},
  "root_seed": 3,
  "repetitions": 2
}"#;

fn write_spec(dir: &Path) -> String {
    let p = dir.join("spec.json");
    fs::write(&p, SPEC).unwrap();
    p.to_str().unwrap().to_string()
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for sub in ["", "curves", "summaries"] {
        for e in fs::read_dir(dir.join(sub)).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                out.push(p.strip_prefix(dir).unwrap().to_str().unwrap().to_string());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn two_methods_two_seeds_write_four_curves_and_one_table() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let out = tmp.path().join("run");
    let res = cool(&[
        "train",
        "--config",
        &spec,
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        files_under(&out),
        [
            "comparison.csv",
            "curves/cool-rep0.csv",
            "curves/cool-rep1.csv",
            "curves/standard-rep0.csv",
            "curves/standard-rep1.csv",
            "summaries/cool-rep0.json",
            "summaries/cool-rep1.json",
            "summaries/standard-rep0.json",
            "summaries/standard-rep1.json",
        ]
    );
    let table = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("schema_version,"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summaries/cool-rep1.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["config"]["method"], "cool");
}

#[test]
fn rerun_is_byte_identical_and_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(
        code(&cool(&[
            "train",
            "--config",
            &spec,
            "--out",
            a.to_str().unwrap(),
            "--jobs",
            "1"
        ])),
        0
    );
    assert_eq!(
        code(&cool(&[
            "train",
            "--config",
            &spec,
            "--out",
            b.to_str().unwrap(),
            "--jobs",
            "2"
        ])),
        0
    );
    for f in files_under(&a) {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
    }

    // An existing directory is refused and left untouched.
    let keep = a.join("notes.txt");
    fs::write(&keep, "mine").unwrap();
    let before = fs::read(a.join("comparison.csv")).unwrap();
    let refused = cool(&["train", "--config", &spec, "--out", a.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(code(&refused), 1);
    assert_eq!(fs::read(a.join("comparison.csv")).unwrap(), before);

    // With --force the run's own files are replaced and foreign files kept.
    let forced = cool(&[
        "train",
        "--config",
        &spec,
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "9",
        "--force",
    ]);
    assert_eq!(code(&forced), 0);
    assert_ne!(fs::read(a.join("comparison.csv")).unwrap(), before);
    assert_eq!(fs::read_to_string(&keep).unwrap(), "mine");
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let out = tmp.path().join("run");
    let res = cool(&[
        "train",
        "--config",
        &spec,
        "--out",
        out.to_str().unwrap(),
        "--repetitions",
        "1",
        "--epochs",
        "3",
    ]);
    assert_eq!(code(&res), 0);
    assert_eq!(fs::read_dir(out.join("curves")).unwrap().count(), 2);
    let curve = fs::read_to_string(out.join("curves/standard-rep0.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 3);
}

#[test]
fn theorem_check_passes_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    for p in [&a, &b] {
        let res = cool(&[
            "theorem-check",
            "--n",
            "2..4",
            "--seed",
            "5",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["schema_version"], 1);
    // The sweep reports a strictly decreasing minimum risk along n for each pair.
    let rows = report["symmetric_sweep"].as_array().unwrap();
    for pair in rows.chunks(3) {
        let risks: Vec<f64> = pair.iter().map(|r| r["min_risk"].as_f64().unwrap()).collect();
        assert!(risks[0] > risks[1] && risks[1] > risks[2], "{risks:?}");
    }
}

#[test]
fn exit_codes_distinguish_usage_and_runtime_errors() {
    assert_eq!(code(&cool(&["train"])), 1);
    assert_eq!(code(&cool(&["frobnicate"])), 1);
    assert_eq!(code(&cool(&["theorem-check", "--n", "5..2"])), 1);
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, SPEC.replace("\"cool\"", "\"forward\"")).unwrap();
    assert_eq!(
        code(&cool(&["train", "--config", bad.to_str().unwrap(), "--out", "x"])),
        1
    );
    // A dataset file that does not exist surfaces while the run is underway.
    let missing = tmp.path().join("missing.json");
    fs::write(
        &missing,
        r#"{"dataset": {"generator": {"kind": "csv", "path": "/nonexistent/d.csv"}, "noise": {"kind": "none"}},
            "methods": ["standard"]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    assert_eq!(
        code(&cool(&[
            "train",
            "--config",
            missing.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])),
        3
    );
    assert_eq!(code(&cool(&["--help"])), 0);
}

#[test]
fn exported_dataset_reimports_bit_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let first = tmp.path().join("d.csv");
    let second = tmp.path().join("d2.csv");
    assert_eq!(
        code(&cool(&[
            "export-dataset",
            "--config",
            &spec,
            "--out",
            first.to_str().unwrap()
        ])),
        0
    );
    let res = cool(&[
        "import-dataset",
        first.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0);
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    let shape: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(shape["classes"], 2);
    assert_eq!(shape["dim"], 2);
}

#[test]
fn sweep_lambda_writes_one_row_per_grid_value() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let out = tmp.path().join("sweep.csv");
    let res = cool(&[
        "sweep-lambda",
        "--config",
        &spec,
        "--grid",
        "0,0.5,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lambdas: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(lambdas, ["0", "0.5", "1"]);
}
