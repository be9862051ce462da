use std::path::Path;
use std::process::{Command, Output};

use trustphys::commands::snapshot;

fn trustphys(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trustphys")).args(args).current_dir(cwd).output().unwrap()
}

const SMALL: [&str; 4] = ["--set", "cohort.participants_per_condition=1", "--set", "cohort.drive_s=120"];

#[test]
fn simulate_twice_gives_identical_trees() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["simulate", "--seed", "7", "--out", out];
        args.extend(SMALL);
        let o = trustphys(&args, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (snapshot(&dir.path().join("a")).unwrap(), snapshot(&dir.path().join("b")).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn missing_out_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(trustphys(&["simulate", "--seed", "7"], dir.path()).status.code(), Some(2));
    assert_eq!(trustphys(&["simulate", "--out", "x", "--set", "cohort.nope=1"], dir.path()).status.code(), Some(2));
}

#[test]
fn zero_participants_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = trustphys(&["simulate", "--out", "c", "--set", "cohort.participants_per_condition=0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("participants"));
}

#[test]
fn echoed_config_reproduces_features() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--seed", "3", "--out", "cohort"];
    args.extend(SMALL);
    assert!(trustphys(&args, dir.path()).status.success());
    let o = trustphys(
        &["features", "--seed", "3", "--window-s", "20", "--sessions", "cohort", "--out", "f1.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = trustphys(
        &["features", "--config", "f1.csv.config.json", "--sessions", "cohort", "--out", "f2.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("f1.csv"), read("f2.csv"));
    assert_eq!(read("f1.csv.config.json"), read("f2.csv.config.json"));
    let echo = String::from_utf8(read("f1.csv.config.json")).unwrap();
    assert!(echo.contains("\"window_s\": 20.0"), "{echo}");
}

/// Simulates with the given flags and reads `nested_cv` back from the config echo.
fn echoed_nested_cv(flags: &[&str]) -> Option<bool> {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", "c"];
    args.extend(SMALL);
    args.extend(flags);
    assert!(trustphys(&args, dir.path()).status.success());
    let echo = std::fs::read_to_string(dir.path().join("c").join("run_config.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&echo).unwrap();
    v["nested_cv"].as_bool()
}

#[test]
fn nested_cv_flag_forms() {
    assert_eq!(echoed_nested_cv(&[]), Some(true));
    assert_eq!(echoed_nested_cv(&["--nested-cv"]), Some(true));
    assert_eq!(echoed_nested_cv(&["--nested-cv=false"]), Some(false));
}

#[test]
fn pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "--seed",
        "5",
        "--nested-cv=false",
        "--set",
        "cohort.participants_per_condition=3",
        "--set",
        "cohort.drive_s=600",
        "--set",
        "train.n_iter=3",
        "--set",
        "train.compare_baselines=false",
    ];
    let steps: [&[&str]; 5] = [
        &["simulate", "--out", "cohort"],
        &["features", "--sessions", "cohort", "--out", "features.csv"],
        &["features", "--exclude-fa", "--sessions", "cohort", "--out", "no_fa.csv"],
        &["train", "--features", "features.csv", "--out", "model.json"],
        &["evaluate", "--features", "features.csv", "--model", "model.json", "--out", "report.json"],
    ];
    for step in steps {
        let args: Vec<&str> = step.iter().chain(&common).copied().collect();
        let o = trustphys(&args, dir.path());
        assert!(o.status.success(), "{step:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for metric in ["accuracy", "precision", "recall", "f1", "roc_auc"] {
        assert!(report["gbdt"]["mean"][metric].is_number(), "{metric} missing");
    }
    let text = |p: &str| std::fs::read_to_string(dir.path().join(p)).unwrap();
    let (all, no_fa) = (text("features.csv"), text("no_fa.csv"));
    assert!(all.contains(",fa,"));
    assert!(!no_fa.contains(",fa,"));
    assert!(no_fa.lines().count() < all.lines().count());
}
