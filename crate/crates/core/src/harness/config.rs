//! Experiment configuration (JSON, every field optional).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::AttackConfig;
use crate::datagen::DatasetSpec;
use crate::detectors::{DetectorKind, DEFAULT_FOLDS};
use crate::error::{FmdError, Result};
use crate::model::TrainConfig;
use crate::scoring::{Alignment, Norm, ScoreSettings};

pub const SEED_ENV: &str = "FMD_SEED";

/// How the hybrid experiment picks its detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifierChoice {
    /// Best cross-validated family.
    #[default]
    Auto,
    Fixed(DetectorKind),
}

impl std::str::FromStr for ClassifierChoice {
    type Err = FmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ClassifierChoice::Auto),
            other => other.parse().map(ClassifierChoice::Fixed),
        }
    }
}

impl std::fmt::Display for ClassifierChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifierChoice::Auto => f.write_str("auto"),
            ClassifierChoice::Fixed(k) => f.write_str(k.as_str()),
        }
    }
}

impl Serialize for ClassifierChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassifierChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives every stage; overrides `dataset.seed` and `train.seed`.
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// Fraction of the images used to train the model.
    pub model_split: f64,
    pub train: TrainConfig,
    pub fgsm: AttackConfig,
    pub bim: AttackConfig,
    /// Adversarial images per attack.
    pub candidates: usize,
    /// Below this many usable candidates the run fails.
    pub min_candidates: usize,
    pub median_window: usize,
    pub wiener_window: usize,
    pub wiener_noise_power: Option<f64>,
    pub k: usize,
    pub norm: Norm,
    pub alignment: Alignment,
    /// Fraction of the score records used to train detectors.
    pub detector_split: f64,
    pub folds: usize,
    pub hybrid_classifier: ClassifierChoice,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dataset: DatasetSpec::default(),
            model_split: 0.5,
            train: TrainConfig::default(),
            fgsm: AttackConfig::fgsm(8.0 / 255.0),
            bim: AttackConfig::bim(8.0 / 255.0, 2.0 / 255.0, 10),
            candidates: 200,
            min_candidates: 50,
            median_window: 3,
            wiener_window: 5,
            wiener_noise_power: None,
            k: 5,
            norm: Norm::L1,
            alignment: Alignment::Union,
            detector_split: 0.5,
            folds: DEFAULT_FOLDS,
            hybrid_classifier: ClassifierChoice::Auto,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FmdError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| FmdError::config(format!("{}: {e}", path.display())))
    }

    /// Applies `FMD_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| FmdError::config(format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer")))?;
        }
        Ok(())
    }

    /// Copy with the sub-config seeds tied to the master seed.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.dataset.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        self.fgsm.validate()?;
        self.bim.validate()?;
        for (name, r) in [("model_split", self.model_split), ("detector_split", self.detector_split)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(FmdError::config(format!("{name} {r} outside (0, 1)")));
            }
        }
        if self.min_candidates == 0 || self.candidates < self.min_candidates {
            return Err(FmdError::config(format!(
                "candidates ({}) must be >= min_candidates ({}) >= 1",
                self.candidates, self.min_candidates
            )));
        }
        for (name, w) in [("median_window", self.median_window), ("wiener_window", self.wiener_window)] {
            if w < 3 || w % 2 == 0 {
                return Err(FmdError::config(format!("{name} must be odd and >= 3, got {w}")));
            }
        }
        if let Some(nu) = self.wiener_noise_power {
            if !(nu >= 0.0 && nu.is_finite()) {
                return Err(FmdError::config("wiener_noise_power must be finite and >= 0"));
            }
        }
        if self.k == 0 || self.k > crate::model::NUM_CLASSES {
            return Err(FmdError::config(format!("k must lie in 1..={}", crate::model::NUM_CLASSES)));
        }
        if self.folds < 2 {
            return Err(FmdError::config("folds must be at least 2"));
        }
        Ok(())
    }

    pub fn score_settings(&self) -> ScoreSettings {
        ScoreSettings {
            k: self.k,
            norm: self.norm,
            alignment: self.alignment,
        }
    }

    /// SHA-256 of everything that affects results (the output directory
    /// is excluded).
    pub fn fingerprint(&self) -> String {
        let mut cfg = self.resolved();
        cfg.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&cfg).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_roundtrip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let empty: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, cfg);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sede": 1}"#).is_err());
    }

    #[test]
    fn classifier_choice_parses() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"hybrid_classifier": "svm"}"#).unwrap();
        assert_eq!(c.hybrid_classifier, ClassifierChoice::Fixed(DetectorKind::Svm));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"hybrid_classifier": "best"}"#).is_err());
    }

    #[test]
    fn fingerprint_tracks_results_not_paths() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 7;
        assert_ne!(a.fingerprint(), b.fingerprint());
        // sub-seeds follow the master seed
        let mut c = a.clone();
        c.dataset.seed = 99;
        assert_eq!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn validation_catches_bad_values() {
        for edit in [
            |c: &mut ExperimentConfig| c.median_window = 4,
            |c: &mut ExperimentConfig| c.candidates = 10,
            |c: &mut ExperimentConfig| c.detector_split = 1.0,
            |c: &mut ExperimentConfig| c.k = 11,
            |c: &mut ExperimentConfig| c.folds = 1,
        ] {
            let mut cfg = ExperimentConfig::default();
            edit(&mut cfg);
            assert!(matches!(cfg.validate(), Err(FmdError::Config(_))));
        }
    }
}
