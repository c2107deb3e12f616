use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expander-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is a json record")
}

#[test]
fn config_errors_exit_2() {
    for args in [
        &["gap", "--set", "bogus=1"][..],
        &["gap", "--q", "x"],
        &["gap", "--set", "tol"],
        &["profile", "--q", "5"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let rec = error_record(&out);
        assert_eq!(rec["error"], "config");
        assert_eq!(rec["exit_code"], 2);
        assert_eq!(rec["command"], args[0]);
    }
}

#[test]
fn cap_errors_exit_3() {
    let out = run(&["diameter", "--q", "11", "--set", "max_order=100"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "cap");
    assert!(out.stdout.is_empty());
}

#[test]
fn trivial_quotient_has_unit_gap() {
    let out = run(&["gap", "--q", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["rows"][0]["order"], 1);
    assert_eq!(doc["rows"][0]["gap"].as_f64(), Some(1.0));
    assert_eq!(doc["invariants"]["ok"], true);
}

#[test]
fn json_and_csv_share_columns() {
    let json = run(&["gap", "--q", "5,7"]);
    let csv = run(&["gap", "--q", "5,7", "--format", "csv"]);
    let doc: Value = serde_json::from_slice(&json.stdout).unwrap();
    let keys: Vec<&str> = doc["rows"][0].as_object().unwrap().keys().map(String::as_str).collect();
    let text = String::from_utf8(csv.stdout).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header.split(',').collect::<Vec<_>>(), keys);
    for key in [
        "q", "order", "lambda2", "opnorm0", "gap", "diameter", "method", "residual", "cheeger", "seed",
    ] {
        assert!(keys.contains(&key), "missing {key}");
    }
}

#[test]
fn config_file_and_out_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "q = 5,7\nseed = 11\nformat = csv\n").unwrap();
    let out_dir = dir.path().join("reports");
    let out = run(&[
        "diameter",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(out_dir.join("diameter.csv")).unwrap();
    assert!(text.contains("# seed=11\n"));
    assert!(text.contains("\n5,120,6,"));
    assert!(text.contains("\n7,336,7,"));
}

#[test]
fn seed_is_recorded_and_changes_the_hash() {
    let a: Value = serde_json::from_slice(&run(&["qr", "--q", "3", "--seed", "1"]).stdout).unwrap();
    let b: Value = serde_json::from_slice(&run(&["qr", "--q", "3", "--seed", "2"]).stdout).unwrap();
    assert_eq!((a["seed"].as_u64(), b["seed"].as_u64()), (Some(1), Some(2)));
    assert_ne!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["tag"], "quasirandom-degree-bound");
}
