//! Experiment report: JSON source of truth plus aligned text tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::attacks::AttackMethod;
use crate::detectors::{DetectorKind, Hyper, Metrics};
use crate::filters::FilterTag;
use crate::model::EpochLog;
use crate::scoring::AttackTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub images: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attack: AttackMethod,
    pub images: usize,
    /// Accuracy on the attacked images; the clean versions are all correct.
    pub accuracy_after: f64,
    pub max_linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub filter: FilterTag,
    pub attack: AttackTag,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownAttackRow {
    pub attack: AttackTag,
    pub filter: FilterTag,
    pub classifier: DetectorKind,
    pub hyper: Hyper,
    pub cv_accuracy: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridRow {
    pub filter: FilterTag,
    pub classifier: DetectorKind,
    pub hyper: Hyper,
    pub cv_accuracy: f64,
    /// Best CV accuracy reached by each family considered.
    pub family_cv_accuracy: BTreeMap<DetectorKind, f64>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub config_sha256: String,
    pub dataset: DatasetSummary,
    pub model: ModelSummary,
    pub attacks: Vec<AttackSummary>,
    pub scores: Vec<ScoreSummary>,
    pub known_attack: Vec<KnownAttackRow>,
    pub hybrid: Vec<HybridRow>,
}

impl Report {
    pub fn hybrid_accuracy(&self, filter: FilterTag) -> Option<f64> {
        self.hybrid.iter().find(|r| r.filter == filter).map(|r| r.metrics.accuracy)
    }

    pub fn mean_score(&self, filter: FilterTag, attack: AttackTag) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| s.filter == filter && s.attack == attack)
            .map(|s| s.mean)
    }

    /// Known-attack and hybrid tables laid out like the classic
    /// filter-by-classifier comparison.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}  config {}", self.seed, &self.config_sha256[..12]);
        let _ = writeln!(
            out,
            "model: train accuracy {:.3}, test accuracy {:.3} ({} epochs)",
            self.model.train_accuracy,
            self.model.test_accuracy,
            self.model.epochs.len()
        );
        for a in &self.attacks {
            let _ = writeln!(
                out,
                "{}: {} images, accuracy 1.000 -> {:.3}, max Linf {:.6}",
                a.attack.as_str(),
                a.images,
                a.accuracy_after,
                a.max_linf
            );
        }
        let _ = writeln!(out, "\nMean score");
        let _ = writeln!(out, "{:<8}{:>12}{:>12}{:>12}", "", "clean", "fgsm", "bim");
        for filter in [FilterTag::Median, FilterTag::Wiener] {
            let _ = write!(out, "{:<8}", filter.as_str());
            for attack in [AttackTag::Clean, AttackTag::Fgsm, AttackTag::Bim] {
                match self.mean_score(filter, attack) {
                    Some(m) => { let _ = write!(out, "{m:>12.6}"); }
                    None => { let _ = write!(out, "{:>12}", "-"); }
                }
            }
            let _ = writeln!(out);
        }

        let _ = writeln!(out, "\nKnown-attack detection accuracy");
        let columns: Vec<(FilterTag, DetectorKind)> = [FilterTag::Median, FilterTag::Wiener]
            .into_iter()
            .flat_map(|f| DetectorKind::ALL.into_iter().map(move |k| (f, k)))
            .filter(|(f, k)| self.known_attack.iter().any(|r| r.filter == *f && r.classifier == *k))
            .collect();
        let _ = write!(out, "{:<8}", "");
        for (f, _) in &columns {
            let _ = write!(out, "{:>9}", f.as_str());
        }
        let _ = write!(out, "\n{:<8}", "");
        for (_, k) in &columns {
            let _ = write!(out, "{:>9}", k.as_str());
        }
        let _ = writeln!(out);
        for attack in [AttackTag::Fgsm, AttackTag::Bim] {
            let _ = write!(out, "{:<8}", attack.as_str());
            for (f, k) in &columns {
                let cell = self
                    .known_attack
                    .iter()
                    .find(|r| r.attack == attack && r.filter == *f && r.classifier == *k)
                    .map(|r| format!("{:.3}", r.metrics.accuracy))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, "{cell:>9}");
            }
            let _ = writeln!(out);
        }

        let _ = writeln!(out, "\nHybrid-attack detection rate");
        let _ = write!(out, "{:<10}", "");
        for r in &self.hybrid {
            let _ = write!(out, "{:>18}", format!("{} ({})", r.filter.as_str(), r.classifier.as_str()));
        }
        let _ = writeln!(out);
        for attack in [AttackTag::Fgsm, AttackTag::Bim] {
            let _ = write!(out, "{:<10}", attack.as_str());
            for r in &self.hybrid {
                let cell = r
                    .metrics
                    .detection_rate
                    .get(&attack)
                    .map(|v| format!("{v:.3}"))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, "{cell:>18}");
            }
            let _ = writeln!(out);
        }
        let _ = write!(out, "{:<10}", "overall");
        for r in &self.hybrid {
            let _ = write!(out, "{:>18}", format!("{:.3}", r.metrics.accuracy));
        }
        let _ = writeln!(out);
        out
    }
}
