//! The end-to-end pipeline: dataset -> model -> attacks -> scores ->
//! detectors -> report. Each stage persists its artifacts and a completion
//! marker so an interrupted run can resume.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ClassifierChoice, ExperimentConfig};
use super::io::{
    decode_image_cache, encode_image_cache, hash_tree, read_file, read_image_dir, write_file,
    write_image_dir, write_scores_csv, ManifestEntry, NamedImage,
};
use super::report::{
    AttackSummary, DatasetSummary, HybridRow, KnownAttackRow, ModelSummary, Report, ScoreSummary,
};
use crate::attacks::{attack, AttackConfig, AttackMethod};
use crate::datagen::{generate, stratified_split, LabeledImage};
use crate::detectors::{
    evaluate, fit, points_of, select_best, tune, DetectorKind, DetectorModel, Metrics,
};
use crate::error::{FmdError, Result};
use crate::filters::{Denoiser, FilterTag};
use crate::model::{accuracy, load_weights, save_weights, train, ModelParams};
use crate::rng::SplitMix64;
use crate::scoring::{score_dataset, AttackTag, ScoreInput, ScoreRecord, ScoreSettings};

// Stream indices for SplitMix64::derive(seed, _).
const STREAM_CANDIDATES: u64 = 100;
const STREAM_CLEAN: u64 = 101;
const STREAM_DETECTOR_SPLIT: u64 = 102;
const STREAM_TUNING: u64 = 103;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const MANIFEST_JSON: &str = "manifest.json";
const STAGE_DIR: &str = "stages";

fn derived_seed(seed: u64, stream: u64) -> u64 {
    SplitMix64::derive(seed, stream).next_u64()
}

fn labeled(images: &[NamedImage]) -> Vec<LabeledImage> {
    images
        .iter()
        .map(|n| LabeledImage {
            image: n.image.clone(),
            label: n.label,
        })
        .collect()
}

/// Generates the dataset on the 8-bit grid, named `cls<label>_<index>`
/// with a per-class index.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Vec<NamedImage>> {
    let cfg = cfg.resolved();
    let mut counters = BTreeMap::<usize, usize>::new();
    Ok(generate(&cfg.dataset)?
        .into_iter()
        .map(|s| {
            let idx = counters.entry(s.label).or_default();
            let name = format!("cls{}_{}", s.label, idx);
            *idx += 1;
            NamedImage {
                name,
                image: s.image.quantized(),
                label: s.label,
            }
        })
        .collect())
}

/// Stratified model train/test split.
pub fn split_dataset(images: &[NamedImage], cfg: &ExperimentConfig) -> Result<(Vec<NamedImage>, Vec<NamedImage>)> {
    stratified_split(images, |n| n.label, cfg.model_split, cfg.seed)
}

pub fn train_model(train_set: &[NamedImage], test_set: &[NamedImage], cfg: &ExperimentConfig) -> Result<(ModelParams, ModelSummary)> {
    let cfg = cfg.resolved();
    let (tr, te) = (labeled(train_set), labeled(test_set));
    let outcome = train(&tr, Some(&te), &cfg.train)?;
    let summary = ModelSummary {
        train_accuracy: accuracy(&outcome.params, &tr)?,
        test_accuracy: accuracy(&outcome.params, &te)?,
        epochs: outcome.log,
    };
    Ok((outcome.params, summary))
}

/// A seeded random selection of correctly classified test images, at most
/// `cfg.candidates` of them.
pub fn select_candidates(params: &ModelParams, test_set: &[NamedImage], cfg: &ExperimentConfig) -> Result<Vec<NamedImage>> {
    let correct: Vec<bool> = test_set
        .par_iter()
        .map(|n| params.predict(&n.image).map(|p| p == n.label))
        .collect::<Result<_>>()?;
    let mut pool: Vec<&NamedImage> = test_set.iter().zip(correct).filter(|(_, c)| *c).map(|(n, _)| n).collect();
    SplitMix64::new(derived_seed(cfg.seed, STREAM_CANDIDATES)).shuffle(&mut pool);
    if pool.len() < cfg.candidates {
        if pool.len() < cfg.min_candidates {
            return Err(FmdError::InsufficientData(format!(
                "only {} correctly classified test images, need at least {}",
                pool.len(),
                cfg.min_candidates
            )));
        }
        warn!(
            "only {} correctly classified test images; using {} candidates instead of {}",
            pool.len(),
            pool.len(),
            cfg.candidates
        );
    }
    pool.truncate(cfg.candidates);
    Ok(pool.into_iter().cloned().collect())
}

/// A seeded random sample of `count` legitimate test images.
pub fn select_clean(test_set: &[NamedImage], count: usize, cfg: &ExperimentConfig) -> Result<Vec<NamedImage>> {
    if count > test_set.len() {
        return Err(FmdError::InsufficientData(format!(
            "need {count} clean images but the test split has {}",
            test_set.len()
        )));
    }
    let mut idx: Vec<usize> = (0..test_set.len()).collect();
    SplitMix64::new(derived_seed(cfg.seed, STREAM_CLEAN)).shuffle(&mut idx);
    Ok(idx[..count].iter().map(|&i| test_set[i].clone()).collect())
}

/// One row of an attack log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackLogRow {
    pub filename: String,
    pub label: usize,
    pub pred_clean: usize,
    pub pred_adv: usize,
    pub linf: f64,
}

/// Attacks every image (in parallel, results in input order).
pub fn attack_images(
    params: &ModelParams,
    images: &[NamedImage],
    method: AttackMethod,
    acfg: &AttackConfig,
) -> Result<(Vec<NamedImage>, Vec<AttackLogRow>)> {
    acfg.validate()?;
    let results: Vec<(NamedImage, AttackLogRow)> = images
        .par_iter()
        .map(|n| {
            let adv = attack(method, params, &n.image, n.label, acfg)?;
            let row = AttackLogRow {
                filename: format!("{}.ppm", n.name),
                label: n.label,
                pred_clean: params.predict(&n.image)?,
                pred_adv: params.predict(&adv)?,
                linf: adv.linf_distance(&n.image)?,
            };
            Ok((
                NamedImage {
                    name: n.name.clone(),
                    image: adv,
                    label: n.label,
                },
                row,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().unzip())
}

pub fn write_attack_log(path: &Path, rows: &[AttackLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| FmdError::parse(path.display().to_string(), e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| FmdError::parse(path.display().to_string(), e.to_string()))?;
    write_file(path, &bytes)
}

pub fn denoiser_for(filter: FilterTag, cfg: &ExperimentConfig) -> Denoiser {
    match filter {
        FilterTag::Median => Denoiser::Median {
            window: cfg.median_window,
        },
        FilterTag::Wiener => Denoiser::WienerAdaptive {
            window: cfg.wiener_window,
            noise_power: cfg.wiener_noise_power,
        },
    }
}

/// Images to score, tagged; ids are `<attack>/<name>`.
pub fn score_inputs(sets: &[(AttackTag, &[NamedImage])]) -> Vec<ScoreInput> {
    sets.iter()
        .flat_map(|(tag, images)| {
            images.iter().map(move |n| ScoreInput {
                image_id: format!("{}/{}", tag.as_str(), n.name),
                image: n.image.clone(),
                attack: *tag,
            })
        })
        .collect()
}

/// Detectors applicable to known-attack rows for a filter.
pub fn known_attack_classifiers(filter: FilterTag) -> &'static [DetectorKind] {
    match filter {
        FilterTag::Median => &DetectorKind::ALL[..3],
        FilterTag::Wiener => &DetectorKind::ALL,
    }
}

/// Stratified (by attack tag) detector train/test split.
pub fn split_records(records: &[ScoreRecord], cfg: &ExperimentConfig) -> Result<(Vec<ScoreRecord>, Vec<ScoreRecord>)> {
    stratified_split(
        records,
        |r| r.attack as usize,
        cfg.detector_split,
        derived_seed(cfg.seed, STREAM_DETECTOR_SPLIT),
    )
}

/// Known-attack experiment for one (attack, filter) pair: `records` holds
/// the adversarial records of that attack plus the same number of clean ones.
pub fn run_known_attack(
    records: &[ScoreRecord],
    attack: AttackTag,
    filter: FilterTag,
    cfg: &ExperimentConfig,
) -> Result<Vec<(KnownAttackRow, DetectorModel)>> {
    let (train, test) = split_records(records, cfg)?;
    let points = points_of(&train);
    let seed = derived_seed(cfg.seed, STREAM_TUNING);
    known_attack_classifiers(filter)
        .iter()
        .map(|&kind| {
            let tuned = tune(&points, &kind.default_grid(), cfg.folds, seed)?;
            let model = fit(&points, &tuned.best, seed)?;
            let metrics = evaluate(&model, &test)?;
            Ok((
                KnownAttackRow {
                    attack,
                    filter,
                    classifier: kind,
                    hyper: tuned.best,
                    cv_accuracy: tuned.cv_accuracy,
                    metrics,
                },
                model,
            ))
        })
        .collect()
}

/// Hybrid experiment for one filter: FGSM + BIM adversarial records plus
/// an equal number of clean ones; the classifier is chosen by CV.
pub fn run_hybrid(records: &[ScoreRecord], filter: FilterTag, cfg: &ExperimentConfig) -> Result<(HybridRow, DetectorModel)> {
    let (train, test) = split_records(records, cfg)?;
    let points = points_of(&train);
    let seed = derived_seed(cfg.seed, STREAM_TUNING);
    let kinds: Vec<DetectorKind> = match cfg.hybrid_classifier {
        ClassifierChoice::Auto => DetectorKind::ALL.to_vec(),
        ClassifierChoice::Fixed(k) => vec![k],
    };
    let selection = select_best(&points, &kinds, cfg.folds, seed)?;
    let model = fit(&points, &selection.tuning.best, seed)?;
    let metrics: Metrics = evaluate(&model, &test)?;
    let row = HybridRow {
        filter,
        classifier: selection.kind,
        hyper: selection.tuning.best,
        cv_accuracy: selection.tuning.cv_accuracy,
        family_cv_accuracy: selection
            .per_kind
            .iter()
            .map(|(k, t)| (*k, t.cv_accuracy))
            .collect(),
        metrics,
    };
    Ok((row, model))
}

fn mean(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n, if n == 0 { 0.0 } else { sum / n as f64 })
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn from_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_file(path)?).map_err(|e| FmdError::parse(path.display().to_string(), e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRecord {
    train: Vec<String>,
    test: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config_sha256: String,
    files: Vec<ManifestEntry>,
}

/// Stage completion markers keyed by the config fingerprint.
struct Stages {
    dir: PathBuf,
    fingerprint: String,
    resume: bool,
    /// Once a stage reruns, every later stage reruns too.
    invalidated: bool,
}

impl Stages {
    fn cached(&mut self, stage: &str) -> bool {
        if !self.resume || self.invalidated {
            return false;
        }
        let done = std::fs::read_to_string(self.dir.join(stage)).is_ok_and(|s| s.trim() == self.fingerprint);
        if done {
            info!("{stage}: reusing completed stage");
        } else {
            self.invalidated = true;
        }
        done
    }

    fn complete(&self, stage: &str) -> Result<()> {
        write_file(&self.dir.join(stage), format!("{}\n", self.fingerprint).as_bytes())
    }
}

/// Runs the whole pipeline under `cfg.output_dir` and returns the report.
/// With `resume`, stages whose marker matches the config fingerprint are
/// loaded from disk instead of recomputed.
pub fn run_all(cfg: &ExperimentConfig, resume: bool) -> Result<Report> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    let fingerprint = cfg.fingerprint();
    let mut stages = Stages {
        dir: out.join(STAGE_DIR),
        fingerprint: fingerprint.clone(),
        resume,
        invalidated: false,
    };

    // dataset
    let t = Instant::now();
    let dataset_dir = out.join("dataset");
    let split_path = out.join("dataset/split.json");
    let (train_set, test_set, n_images) = (|| -> Result<_> {
        if stages.cached("dataset") {
            let all = read_image_dir(&dataset_dir)?;
            let split: SplitRecord = from_json(&split_path)?;
            let by_name: BTreeMap<&str, &NamedImage> = all.iter().map(|n| (n.name.as_str(), n)).collect();
            let pick = |names: &[String]| -> Result<Vec<NamedImage>> {
                names
                    .iter()
                    .map(|s| {
                        by_name
                            .get(s.as_str())
                            .map(|n| (*n).clone())
                            .ok_or_else(|| FmdError::parse("split.json", format!("unknown image {s}")))
                    })
                    .collect()
            };
            let (tr, te) = (pick(&split.train)?, pick(&split.test)?);
            return Ok((tr, te, all.len()));
        }
        let all = build_dataset(&cfg)?;
        write_image_dir(&dataset_dir, &all)?;
        let (tr, te) = split_dataset(&all, &cfg)?;
        let record = SplitRecord {
            train: tr.iter().map(|n| n.name.clone()).collect(),
            test: te.iter().map(|n| n.name.clone()).collect(),
        };
        write_file(&split_path, &to_json(&record)?)?;
        stages.complete("dataset")?;
        Ok((tr, te, all.len()))
    })()
    .map_err(|e| e.in_stage("dataset"))?;
    info!("dataset: {n_images} images ({:.1?})", t.elapsed());

    // model
    let t = Instant::now();
    let weights_path = out.join("model/weights.fmdw");
    let summary_path = out.join("model/summary.json");
    let (params, model_summary) = (|| -> Result<_> {
        if stages.cached("model") {
            let params = load_weights(&read_file(&weights_path)?)?;
            let summary: ModelSummary = from_json(&summary_path)?;
            return Ok((params, summary));
        }
        let (params, summary) = train_model(&train_set, &test_set, &cfg)?;
        write_file(&weights_path, &save_weights(&params))?;
        write_file(&summary_path, &to_json(&summary)?)?;
        stages.complete("model")?;
        Ok((params, summary))
    })()
    .map_err(|e| e.in_stage("model"))?;
    info!(
        "model: train {:.3} / test {:.3} ({:.1?})",
        model_summary.train_accuracy,
        model_summary.test_accuracy,
        t.elapsed()
    );

    // attacks
    let t = Instant::now();
    let cache_path = out.join("attacks/images.bin");
    let (clean, fgsm_imgs, bim_imgs) = (|| -> Result<_> {
        if stages.cached("attacks") {
            let cached = decode_image_cache(&read_file(&cache_path)?)?;
            let take = |prefix: &str| -> Vec<NamedImage> {
                cached
                    .iter()
                    .filter_map(|n| {
                        n.name.strip_prefix(prefix).map(|rest| NamedImage {
                            name: rest.to_string(),
                            ..n.clone()
                        })
                    })
                    .collect()
            };
            return Ok((take("clean/"), take("fgsm/"), take("bim/")));
        }
        let candidates = select_candidates(&params, &test_set, &cfg)?;
        let clean = select_clean(&test_set, 2 * candidates.len(), &cfg)?;
        let mut cache = Vec::new();
        for n in &clean {
            cache.push(NamedImage {
                name: format!("clean/{}", n.name),
                ..n.clone()
            });
        }
        let mut outputs = Vec::new();
        for (method, acfg) in [(AttackMethod::Fgsm, &cfg.fgsm), (AttackMethod::Bim, &cfg.bim)] {
            let (adv, log) = attack_images(&params, &candidates, method, acfg)?;
            let dir = out.join("attacks").join(method.as_str());
            write_image_dir(&dir, &adv)?;
            write_attack_log(&dir.join("log.csv"), &log)?;
            cache.extend(adv.iter().map(|n| NamedImage {
                name: format!("{}/{}", method.as_str(), n.name),
                ..n.clone()
            }));
            outputs.push(adv);
        }
        write_file(&cache_path, &encode_image_cache(&cache))?;
        stages.complete("attacks")?;
        let bim = outputs.pop().expect("two attacks");
        let fgsm = outputs.pop().expect("two attacks");
        Ok((clean, fgsm, bim))
    })()
    .map_err(|e| e.in_stage("attacks"))?;
    let originals: BTreeMap<&str, &NamedImage> = test_set.iter().map(|n| (n.name.as_str(), n)).collect();
    let attack_summaries = [(AttackMethod::Fgsm, &fgsm_imgs), (AttackMethod::Bim, &bim_imgs)]
        .into_iter()
        .map(|(method, adv)| {
            let mut correct = 0usize;
            let mut max_linf: f64 = 0.0;
            for n in adv.iter() {
                if params.predict(&n.image)? == n.label {
                    correct += 1;
                }
                let orig = originals
                    .get(n.name.as_str())
                    .ok_or_else(|| FmdError::parse("attack cache", format!("unknown image {}", n.name)))?;
                max_linf = max_linf.max(n.image.linf_distance(&orig.image)?);
            }
            Ok(AttackSummary {
                attack: method,
                images: adv.len(),
                accuracy_after: correct as f64 / adv.len() as f64,
                max_linf,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("attacks"))?;
    info!(
        "attacks: {} candidates, accuracy after fgsm {:.3}, bim {:.3} ({:.1?})",
        fgsm_imgs.len(),
        attack_summaries[0].accuracy_after,
        attack_summaries[1].accuracy_after,
        t.elapsed()
    );

    // scores
    let t = Instant::now();
    let scores_json = out.join("scores/scores.json");
    let settings: ScoreSettings = cfg.score_settings();
    let all_scores: Vec<ScoreRecord> = (|| -> Result<_> {
        if stages.cached("scores") {
            return from_json(&scores_json);
        }
        let inputs = score_inputs(&[
            (AttackTag::Clean, &clean),
            (AttackTag::Fgsm, &fgsm_imgs),
            (AttackTag::Bim, &bim_imgs),
        ]);
        let mut all = Vec::new();
        for filter in [FilterTag::Median, FilterTag::Wiener] {
            let records = score_dataset(&params, &inputs, &denoiser_for(filter, &cfg), &settings)?;
            write_scores_csv(&out.join(format!("scores/{}.csv", filter.as_str())), &records)?;
            all.extend(records);
        }
        write_file(&scores_json, &to_json(&all)?)?;
        stages.complete("scores")?;
        Ok(all)
    })()
    .map_err(|e| e.in_stage("scores"))?;
    let mut score_summaries = Vec::new();
    for filter in [FilterTag::Median, FilterTag::Wiener] {
        for attack in [AttackTag::Clean, AttackTag::Fgsm, AttackTag::Bim] {
            let (n, m) = mean(
                all_scores
                    .iter()
                    .filter(|r| r.filter == filter && r.attack == attack)
                    .map(|r| r.score),
            );
            score_summaries.push(ScoreSummary {
                filter,
                attack,
                n,
                mean: m,
            });
        }
    }
    info!("scores: {} records ({:.1?})", all_scores.len(), t.elapsed());

    // detectors (always recomputed; cheap relative to the earlier stages)
    let t = Instant::now();
    let n_adv = fgsm_imgs.len();
    let (known_rows, hybrid_rows) = (|| -> Result<_> {
        let mut known_rows = Vec::new();
        let mut hybrid_rows = Vec::new();
        for filter in [FilterTag::Median, FilterTag::Wiener] {
            let of = |attack: AttackTag| -> Vec<ScoreRecord> {
                all_scores
                    .iter()
                    .filter(|r| r.filter == filter && r.attack == attack)
                    .cloned()
                    .collect()
            };
            let clean_records = of(AttackTag::Clean);
            for attack in [AttackTag::Fgsm, AttackTag::Bim] {
                let mut records = of(attack);
                records.extend(clean_records.iter().take(n_adv).cloned());
                for (row, model) in run_known_attack(&records, attack, filter, &cfg)? {
                    let name = format!(
                        "detectors/known_{}_{}_{}.json",
                        attack.as_str(),
                        filter.as_str(),
                        row.classifier.as_str()
                    );
                    write_file(&out.join(name), &to_json(&model)?)?;
                    known_rows.push(row);
                }
            }
            let mut records = of(AttackTag::Fgsm);
            records.extend(of(AttackTag::Bim));
            records.extend(clean_records.iter().take(2 * n_adv).cloned());
            let (row, model) = run_hybrid(&records, filter, &cfg)?;
            write_file(&out.join(format!("detectors/hybrid_{}.json", filter.as_str())), &to_json(&model)?)?;
            hybrid_rows.push(row);
        }
        Ok((known_rows, hybrid_rows))
    })()
    .map_err(|e| e.in_stage("detectors"))?;
    info!("detectors: done ({:.1?})", t.elapsed());

    let report = Report {
        seed: cfg.seed,
        config_sha256: fingerprint.clone(),
        dataset: DatasetSummary {
            images: n_images,
            train: train_set.len(),
            test: test_set.len(),
        },
        model: model_summary,
        attacks: attack_summaries,
        scores: score_summaries,
        known_attack: known_rows,
        hybrid: hybrid_rows,
    };
    (|| -> Result<()> {
        write_file(&out.join("config.json"), &to_json(&cfg)?)?;
        write_file(&out.join(REPORT_JSON), &to_json(&report)?)?;
        write_file(&out.join(REPORT_TXT), report.to_text().as_bytes())?;
        let manifest = Manifest {
            config_sha256: fingerprint,
            files: hash_tree(&out, &[MANIFEST_JSON])?,
        };
        write_file(&out.join(MANIFEST_JSON), &to_json(&manifest)?)
    })()
    .map_err(|e| e.in_stage("report"))?;
    Ok(report)
}
