use std::path::Path;

use fmd_core::datagen::DatasetSpec;
use fmd_core::detectors::DetectorKind;
use fmd_core::filters::FilterTag;
use fmd_core::harness::{run_all, ExperimentConfig, ManifestEntry, MANIFEST_JSON, REPORT_JSON};
use fmd_core::scoring::AttackTag;
use fmd_core::FmdError;

fn small(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset: DatasetSpec {
            per_class: 30,
            ..DatasetSpec::default()
        },
        candidates: 60,
        min_candidates: 20,
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 6;
    cfg
}

#[test]
fn shipped_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::default());
}

#[test]
fn small_run_is_deterministic_resumable_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let report = run_all(&small(&a), false).unwrap();
    run_all(&small(&b), false).unwrap();
    let bytes_a = std::fs::read(a.join(REPORT_JSON)).unwrap();
    assert_eq!(bytes_a, std::fs::read(b.join(REPORT_JSON)).unwrap());

    // resume reuses every stage and reproduces the report
    let resumed = run_all(&small(&a), true).unwrap();
    assert_eq!(resumed, report);
    assert_eq!(bytes_a, std::fs::read(a.join(REPORT_JSON)).unwrap());

    // table structure
    for attack in [AttackTag::Fgsm, AttackTag::Bim] {
        for (filter, expected) in [(FilterTag::Median, 3), (FilterTag::Wiener, 4)] {
            let rows: Vec<DetectorKind> = report
                .known_attack
                .iter()
                .filter(|r| r.attack == attack && r.filter == filter)
                .map(|r| r.classifier)
                .collect();
            assert_eq!(rows, DetectorKind::ALL[..expected].to_vec());
        }
    }
    let n = report.attacks[0].images;
    assert!((20..=60).contains(&n));
    assert_eq!(report.attacks[1].images, n);
    assert_eq!(report.hybrid.len(), 2);
    for row in &report.hybrid {
        assert!(row.metrics.detection_rate.contains_key(&AttackTag::Fgsm));
        assert!(row.metrics.detection_rate.contains_key(&AttackTag::Bim));
        // balanced before splitting; each group loses at most one to rounding
        let positives = row.metrics.true_positive + row.metrics.false_negative;
        assert!((row.metrics.n - positives).abs_diff(n) <= 1);
        assert!(positives.abs_diff(n) <= 2);
    }
    for s in &report.scores {
        let expected = if s.attack == AttackTag::Clean { 2 * n } else { n };
        assert_eq!(s.n, expected);
    }

    // manifest hashes every artifact
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join(MANIFEST_JSON)).unwrap()).unwrap();
    let files: Vec<ManifestEntry> = serde_json::from_value(manifest["files"].clone()).unwrap();
    for required in [
        "dataset/manifest.csv",
        "model/weights.fmdw",
        "attacks/fgsm/log.csv",
        "attacks/bim/manifest.csv",
        "scores/median.csv",
        "scores/wiener.csv",
        "detectors/hybrid_wiener.json",
        "report.json",
        "report.txt",
    ] {
        assert!(files.iter().any(|f| f.path == required), "{required} missing");
    }
    for f in files.iter().take(25) {
        let bytes = std::fs::read(a.join(&f.path)).unwrap();
        assert_eq!(fmd_core::harness::sha256_hex(&bytes), f.sha256, "{}", f.path);
    }
}

#[test]
fn changed_config_invalidates_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let first = run_all(&small(tmp.path()), false).unwrap();
    let mut cfg = small(tmp.path());
    cfg.k = 3;
    let second = run_all(&cfg, true).unwrap();
    assert_ne!(first.config_sha256, second.config_sha256);
    let fresh = run_all(&cfg, false).unwrap();
    assert_eq!(second, fresh);
}

#[test]
fn too_few_correct_images_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.train.epochs = 0;
    cfg.min_candidates = 40;
    cfg.candidates = 60;
    let err = run_all(&cfg, false).unwrap_err();
    assert!(matches!(&err, FmdError::Stage { stage: "attacks", .. }), "{err}");
    assert_eq!(err.class().exit_code(), 3);
}

#[test]
fn invalid_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.wiener_window = 2;
    assert_eq!(run_all(&cfg, false).unwrap_err().class().exit_code(), 2);
}
