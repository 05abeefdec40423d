use std::process::{Command, Output};

fn meandim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meandim")).args(args).output().unwrap()
}

fn config_with_checks(checks: &str) -> tempfile::NamedTempFile {
    let file = tempfile::NamedTempFile::new().unwrap();
    let text = format!(
        r#"{{
            "schema_version": 1,
            "name": "binary",
            "model": {{ "kind": "full_shift", "alphabet": {{ "letters": [0.0, 1.0] }} }},
            "eps_grid": [0.1, 0.01, 0.001],
            "n_grid": [1, 2, 4],
            "checks": {checks}
        }}"#
    );
    std::fs::write(file.path(), text).unwrap();
    file
}

#[test]
fn listing_and_describing() {
    let out = meandim(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["full-shift-binary", "golden-mean-sft", "cantor-full-shift", "sparse-shift", "quantized-chain"] {
        assert!(text.contains(id), "{id} missing from list");
    }
    assert_eq!(meandim(&["describe", "thm6-chain"]).status.code(), Some(0));
    assert_eq!(meandim(&["describe", "nonexistent"]).status.code(), Some(2));
}

#[test]
fn exit_status_follows_check_outcomes() {
    let empty = config_with_checks("[]");
    let out = meandim(&["verify", "--config", empty.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("0 rows, 0 failed"));

    let failing = config_with_checks(r#"[{ "id": "finite-entropy", "params": { "threshold": 0.01 } }]"#);
    assert_eq!(meandim(&["verify", "--config", failing.path().to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    assert_eq!(meandim(&["verify"]).status.code(), Some(2));
    assert_eq!(meandim(&["verify", "--config", "missing.json"]).status.code(), Some(2));
    let bad = config_with_checks(r#"[{ "id": "no-such-check" }]"#);
    let out = meandim(&["verify", "--config", bad.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("checks[0].id"));
}

#[test]
fn table_commands_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = meandim(&["dims", "--config", "sparse-shift", "--out", dir.path().to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let counts = std::fs::read_to_string(dir.path().join("counts.csv")).unwrap();
    assert!(counts.starts_with("model,n,eps,depth,count,exact,ratio,source"));
}
