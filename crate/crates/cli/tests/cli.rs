use std::path::Path;
use std::process::{Command, Output};

fn fmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmd"))
        .args(args)
        .env_remove("FMD_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn fmd")
}

fn ok(args: &[&str]) -> String {
    let out = fmd(args);
    assert!(
        out.status.success(),
        "fmd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stage_by_stage_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name);

    ok(&["dataset", "gen", "--out", s(&p("data")), "--seed", "7", "--per-class", "4"]);
    let manifest = std::fs::read_to_string(p("data/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 40);

    let log = ok(&[
        "model", "train", "--data", s(&p("data")), "--out", s(&p("w.fmdw")), "--seed", "7", "--epochs", "2",
    ]);
    let log: serde_json::Value = serde_json::from_str(&log).unwrap();
    assert_eq!(log.as_array().map(Vec::len), Some(2));

    ok(&[
        "attack", "--method", "fgsm", "--model", s(&p("w.fmdw")), "--in", s(&p("data")), "--out", s(&p("fgsm")),
    ]);
    let attack_log = std::fs::read_to_string(p("fgsm/attack_log.csv")).unwrap();
    assert_eq!(attack_log.lines().count(), 1 + 40);

    ok(&[
        "denoise", "--filter", "median", "--in", s(&p("data")), "--out", s(&p("den")),
    ]);
    assert!(p("den/manifest.csv").exists());

    let clean = format!("clean={}", s(&p("data")));
    let fgsm = format!("fgsm={}", s(&p("fgsm")));
    ok(&[
        "score", "--model", s(&p("w.fmdw")), "--input", &clean, "--input", &fgsm, "--filter", "median", "--out",
        s(&p("scores.csv")),
    ]);
    let scores = std::fs::read_to_string(p("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 80);

    let tuning = ok(&[
        "detect", "train", "--scores", s(&p("scores.csv")), "--classifier", "dtree", "--seed", "7", "--out",
        s(&p("det.json")),
    ]);
    let tuning: serde_json::Value = serde_json::from_str(&tuning).unwrap();
    assert!(tuning["cv_accuracy"].as_f64().unwrap() >= 0.0);

    let metrics = ok(&["detect", "eval", "--model", s(&p("det.json")), "--scores", s(&p("scores.csv"))]);
    let metrics: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(metrics["n"].as_u64(), Some(80));
    let acc = metrics["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn dataset_generation_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        ok(&["dataset", "gen", "--out", s(&tmp.path().join(dir)), "--seed", "3", "--per-class", "2"]);
    }
    let a = std::fs::read(tmp.path().join("a/cls4_1.ppm")).unwrap();
    let b = std::fs::read(tmp.path().join("b/cls4_1.ppm")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");

    assert_eq!(fmd(&["detect", "train", "--scores", "x.csv", "--classifier", "tree", "--out", "y"]).status.code(), Some(2));
    assert_eq!(fmd(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        fmd(&["denoise", "--filter", "median", "--in", s(&missing), "--out", s(&tmp.path().join("o"))])
            .status
            .code(),
        Some(3)
    );

    let bad_seed = Command::new(env!("CARGO_BIN_EXE_fmd"))
        .args(["dataset", "gen", "--out", s(&tmp.path().join("d")), "--per-class", "1"])
        .env("FMD_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad_seed.status.code(), Some(2));
}
