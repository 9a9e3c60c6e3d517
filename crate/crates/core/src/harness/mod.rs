//! Seeded end-to-end experiments: known-attack and hybrid-attack detection
//! with every artifact persisted under one output directory.

mod config;
mod experiment;
mod io;
mod report;

pub use config::{ClassifierChoice, ExperimentConfig, SEED_ENV};
pub use experiment::{
    attack_images, build_dataset, denoiser_for, known_attack_classifiers, run_all, run_hybrid,
    run_known_attack, score_inputs, select_candidates, select_clean, split_dataset, split_records,
    train_model, write_attack_log, AttackLogRow, MANIFEST_JSON, REPORT_JSON, REPORT_TXT,
};
pub use io::{
    decode_image_cache, encode_image_cache, hash_tree, read_image_dir, read_scores_csv, sha256_hex,
    write_image_dir, write_scores_csv, ManifestEntry, NamedImage, MANIFEST_CSV,
};
pub use report::{
    AttackSummary, DatasetSummary, HybridRow, KnownAttackRow, ModelSummary, Report, ScoreSummary,
};
