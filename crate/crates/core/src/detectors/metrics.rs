//! Detection metrics on a labeled test set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DetectorModel;
use crate::error::{FmdError, Result};
use crate::scoring::{AttackTag, ScoreRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    /// Recall over all adversarial records; `None` without any.
    pub adversarial_recall: Option<f64>,
    /// Recall per attack, over the attacks present in the test set.
    pub detection_rate: BTreeMap<AttackTag, f64>,
}

pub fn evaluate(model: &DetectorModel, records: &[ScoreRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let mut per_attack: BTreeMap<AttackTag, (usize, usize)> = BTreeMap::new();
    for r in records {
        let predicted = model.predict(r.score);
        match (r.label, predicted) {
            (1, 1) => tp += 1,
            (1, _) => fn_ += 1,
            (_, 1) => fp += 1,
            _ => tn += 1,
        }
        if r.label == 1 {
            let e = per_attack.entry(r.attack).or_default();
            e.0 += usize::from(predicted == 1);
            e.1 += 1;
        }
    }
    let positives = tp + fn_;
    Ok(Metrics {
        n: records.len(),
        accuracy: (tp + tn) as f64 / records.len() as f64,
        true_positive: tp,
        false_positive: fp,
        true_negative: tn,
        false_negative: fn_,
        adversarial_recall: (positives > 0).then(|| tp as f64 / positives as f64),
        detection_rate: per_attack
            .into_iter()
            .map(|(a, (hit, total))| (a, hit as f64 / total as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{dtree_fit, knn_fit, Point};
    use crate::filters::FilterTag;

    fn rec(score: f64, attack: AttackTag) -> ScoreRecord {
        ScoreRecord {
            image_id: String::new(),
            score,
            label: attack.label(),
            attack,
            filter: FilterTag::Median,
        }
    }

    fn balanced() -> Vec<ScoreRecord> {
        vec![
            rec(0.1, AttackTag::Clean),
            rec(0.2, AttackTag::Clean),
            rec(0.8, AttackTag::Fgsm),
            rec(0.9, AttackTag::Bim),
        ]
    }

    #[test]
    fn perfect_predictor() {
        let train = [Point { score: 0.0, label: 0 }, Point { score: 1.0, label: 1 }];
        let m = DetectorModel::Knn(knn_fit(&train, 1).unwrap());
        let r = evaluate(&m, &balanced()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.adversarial_recall, Some(1.0));
        assert!(r.detection_rate.values().all(|&v| v == 1.0));
        assert_eq!(r.detection_rate.len(), 2);
    }

    #[test]
    fn constant_zero_predictor() {
        let train = [Point { score: 0.0, label: 0 }];
        let m = DetectorModel::Dtree(dtree_fit(&train, 3).unwrap());
        let r = evaluate(&m, &balanced()).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.adversarial_recall, Some(0.0));
        assert_eq!(r.true_positive + r.false_positive + r.true_negative + r.false_negative, r.n);
        assert!(evaluate(&m, &[]).is_err());
    }
}
