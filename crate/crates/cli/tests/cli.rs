use std::path::Path;
use std::process::{Command, Output};

fn sga(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sga"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn sga")
}

const SPEC: &str = r#"{"family":"two-moons","classes":2,"points_per_domain":64,"noise":0.1,
  "shift":{"rotation_degrees":30.0,"noise_sigma":0.1},"seed":3}"#;

fn config(variant: &str, extra: &str) -> String {
    format!(r#"{{"data":{{"path":"data.csv"}},"variant":"{variant}","epochs":2,"seed":1{extra}}}"#)
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    let out = sga(
        &["gen-data", "--spec", "spec.json", "--out", "data.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn gen_data_train_eval() {
    let dir = setup();
    let p = dir.path();
    assert!(std::fs::read_to_string(p.join("data.csv"))
        .unwrap()
        .starts_with("domain,label,f0,f1\n"));
    std::fs::write(p.join("sga-s.json"), config("sga-s", "")).unwrap();

    let out = sga(&["train", "--config", "sga-s.json", "--out", "run"], p);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["metrics.jsonl", "model.json", "eval.json"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }
    let trained: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();

    let out = sga(&["eval", "--model", "run/model.json", "--data", "data.csv"], p);
    assert_eq!(out.status.code(), Some(0));
    let scored: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(scored, trained);
}

#[test]
fn compare_writes_summary() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("a.json"), config("source-only", "")).unwrap();
    std::fs::write(p.join("b.json"), config("sga-g", "")).unwrap();
    let out = sga(
        &[
            "compare",
            "--configs",
            "a.json,b.json",
            "--seeds",
            "0,1",
            "--out",
            "cmp",
        ],
        p,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("source-only") && table.contains("sga-g"));
    let csv = std::fs::read_to_string(p.join("cmp/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn config_errors_exit_2() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(
        p.join("bad.json"),
        r#"{"data":{"path":"data.csv"},"variant":"sga-s","epochs":0}"#,
    )
    .unwrap();
    let out = sga(&["train", "--config", "bad.json", "--out", "run"], p);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(p.join("unknown.json"), config("sga-x", "")).unwrap();
    assert_eq!(
        sga(&["train", "--config", "unknown.json", "--out", "run"], p)
            .status
            .code(),
        Some(2)
    );
    std::fs::write(p.join("one.json"), config("sga-s", "")).unwrap();
    let out = sga(
        &["compare", "--configs", "one.json", "--seeds", "0", "--out", "cmp"],
        p,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_errors_exit_3() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(
        p.join("huge.json"),
        config(
            "sga-l",
            r#","lr":{"initial":1e300,"drop_factor":1.0,"drop_point":1.0}"#,
        ),
    )
    .unwrap();
    let out = sga(&["train", "--config", "huge.json", "--out", "run"], p);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn io_errors_exit_4() {
    let dir = setup();
    let p = dir.path();
    assert_eq!(
        sga(&["train", "--config", "missing.json", "--out", "run"], p)
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        sga(&["eval", "--model", "missing.json", "--data", "data.csv"], p)
            .status
            .code(),
        Some(4)
    );
    std::fs::write(p.join("broken.csv"), "domain,label,f0,f1\nsource,0,1\n").unwrap();
    std::fs::write(
        p.join("c.json"),
        config("sga-s", "").replace("data.csv", "broken.csv"),
    )
    .unwrap();
    let out = sga(&["train", "--config", "c.json", "--out", "run"], p);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
