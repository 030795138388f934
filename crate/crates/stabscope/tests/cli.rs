mod common;

use common::*;

#[test]
fn usage_errors_exit_one() {
    assert_eq!(stabscope(&[]).status.code(), Some(1));
    assert_eq!(stabscope(&["bogus"]).status.code(), Some(1));
    assert_eq!(stabscope(&["--help"]).status.code(), Some(0));
    let o = stabscope(&["scenarios"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn bad_config_exits_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), &TINY.replace("\"seed\": 3,", "\"seed\": 3, \"sed\": 1,"));
    let o = run("scenarios", &cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sed"), "{}", stderr(&o));

    let cfg = fixture(dir.path(), &TINY.replace("\"fault_buses\": [7, 9]", "\"fault_buses\": [7, 42]"));
    let o = run("scenarios", &cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("42"), "{}", stderr(&o));

    let cfg = fixture(dir.path(), &TINY.replace("\"samples\": 256", "\"samples\": 64"));
    let o = run("scenarios", &cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("budget 64 is too small"), "{}", stderr(&o));

    let missing = dir.path().join("nope.json");
    let o = run("scenarios", &missing, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn stage_without_prerequisite_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = run("trends", &cfg, &out, 1);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing prerequisite"), "{}", stderr(&o));
    assert!(stderr(&o).contains("run `stabscope build-db` first"), "{}", stderr(&o));
    assert!(!out.join("trends").exists());
}

#[test]
fn staged_run_detects_edits_and_config_changes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = run("run", &cfg, &out, 1);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for file in [
        "scenarios/scenarios.json",
        "cct/cct.csv",
        "tsdb/features.csv",
        "tsdb/targets.csv",
        "tsdb/schema.json",
        "models/selection_report.csv",
        "shap_cube/cct_min.csv",
        "shap_cube/pfi_cct_min.csv",
        "trends/trend_SG_H_G3.csv",
        "report/report.md",
    ] {
        assert!(out.join(file).is_file(), "{file}");
    }

    // retraining from the same database reproduces the models byte for byte
    let before = tree(&out.join("models"));
    assert_eq!(run("train", &cfg, &out, 1).status.code(), Some(0));
    assert_eq!(tree(&out.join("models")), before);

    // a hand-edited database is refused
    let features = out.join("tsdb/features.csv");
    let original = std::fs::read_to_string(&features).unwrap();
    let mut lines: Vec<&str> = original.lines().collect();
    let edited_row = lines[2].replacen(",", ",9", 2);
    lines[2] = &edited_row;
    std::fs::write(&features, lines.join("\n") + "\n").unwrap();
    let o = run("train", &cfg, &out, 1);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("is stale"), "{}", stderr(&o));
    assert!(stderr(&o).contains("tsdb/features.csv"), "{}", stderr(&o));
    std::fs::write(&features, original).unwrap();

    // changing the ladder invalidates the models for downstream stages
    let cfg = fixture(dir.path(), &TINY.replace("\"theta\": 0.05", "\"theta\": 0.04"));
    let o = run("explain", &cfg, &out, 1);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("is stale"), "{}", stderr(&o));
    // upstream stages are untouched by the change
    assert_eq!(run("train", &cfg, &out, 1).status.code(), Some(0));
    assert_eq!(run("explain", &cfg, &out, 1).status.code(), Some(0));
}

#[test]
fn out_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), TINY);
    let out = dir.path().join("elsewhere");
    assert_eq!(run("scenarios", &cfg, &out, 1).status.code(), Some(0));
    assert!(out.join("scenarios/manifest.json").is_file());
    assert!(!dir.path().join("out").exists());
}
