//! Prediction-shift score: distance between the top-k prediction vectors of
//! an image and of its denoised version.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FmdError, Result};
use crate::filters::{Denoiser, FilterTag};
use crate::image::Image;
use crate::model::ModelParams;

/// Ranked `(class, confidence)` pairs, confidence descending, ties by class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    pub entries: Vec<(usize, f64)>,
}

impl PredictionVector {
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn confidence_of(&self, class: usize) -> Option<f64> {
        self.entries.iter().find(|(c, _)| *c == class).map(|&(_, p)| p)
    }
}

pub fn top_k(probs: &[f64], k: usize) -> Result<PredictionVector> {
    if k == 0 || k > probs.len() {
        return Err(FmdError::config(format!(
            "k = {k} outside [1, {}]",
            probs.len()
        )));
    }
    let mut ranked: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(PredictionVector { entries: ranked })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl std::str::FromStr for Norm {
    type Err = FmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(FmdError::config(format!("unknown norm {other:?}"))),
        }
    }
}

/// Which class ids the difference vector is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    /// Classes present in either vector; a class missing on one side counts as 0 there.
    #[default]
    Union,
    /// Only the original vector's classes.
    OrigOnly,
}

/// `(1 / k) * || P_orig - P_denoised ||` over the aligned class set.
pub fn fmd_score(
    orig: &PredictionVector,
    denoised: &PredictionVector,
    norm: Norm,
    alignment: Alignment,
) -> Result<f64> {
    if orig.k() != denoised.k() {
        return Err(FmdError::MismatchedK(orig.k(), denoised.k()));
    }
    let mut aligned: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for &(c, p) in &orig.entries {
        aligned.entry(c).or_default().0 = p;
    }
    for &(c, p) in &denoised.entries {
        match alignment {
            Alignment::Union => aligned.entry(c).or_default().1 = p,
            Alignment::OrigOnly => {
                if let Some(slot) = aligned.get_mut(&c) {
                    slot.1 = p;
                }
            }
        }
    }
    let diffs = aligned.values().map(|(a, b)| (a - b).abs());
    let distance = match norm {
        Norm::L1 => diffs.sum::<f64>(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    };
    Ok(distance / orig.k() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackTag {
    Clean,
    Fgsm,
    Bim,
}

impl AttackTag {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackTag::Clean => "clean",
            AttackTag::Fgsm => "fgsm",
            AttackTag::Bim => "bim",
        }
    }

    /// 1 for adversarial, 0 for legitimate.
    pub fn label(self) -> u8 {
        u8::from(self != AttackTag::Clean)
    }
}

impl std::str::FromStr for AttackTag {
    type Err = FmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(AttackTag::Clean),
            "fgsm" => Ok(AttackTag::Fgsm),
            "bim" => Ok(AttackTag::Bim),
            other => Err(FmdError::config(format!("unknown attack tag {other:?}"))),
        }
    }
}

/// One labeled score: the detector's training/evaluation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: String,
    pub score: f64,
    pub label: u8,
    pub attack: AttackTag,
    pub filter: FilterTag,
}

/// An image to score together with its provenance.
#[derive(Debug, Clone)]
pub struct ScoreInput {
    pub image_id: String,
    pub image: Image,
    pub attack: AttackTag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSettings {
    pub k: usize,
    pub norm: Norm,
    pub alignment: Alignment,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        Self {
            k: 5,
            norm: Norm::L1,
            alignment: Alignment::Union,
        }
    }
}

/// Score of a single image under `denoiser`.
pub fn score_image(
    params: &ModelParams,
    img: &Image,
    denoiser: &Denoiser,
    settings: &ScoreSettings,
) -> Result<f64> {
    let before = top_k(&params.forward(img)?, settings.k)?;
    let after = top_k(&params.forward(&denoiser.apply(img)?)?, settings.k)?;
    fmd_score(&before, &after, settings.norm, settings.alignment)
}

/// Scores every input (in parallel); output order matches input order.
pub fn score_dataset(
    params: &ModelParams,
    inputs: &[ScoreInput],
    denoiser: &Denoiser,
    settings: &ScoreSettings,
) -> Result<Vec<ScoreRecord>> {
    inputs
        .par_iter()
        .map(|input| {
            Ok(ScoreRecord {
                image_id: input.image_id.clone(),
                score: score_image(params, &input.image, denoiser, settings)?,
                label: input.attack.label(),
                attack: input.attack,
                filter: denoiser.tag(),
            })
        })
        .collect()
}

/// `%.9g`-style rendering used in score files.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (mantissa, e) = s.split_once('e').expect("scientific");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(entries: &[(usize, f64)]) -> PredictionVector {
        PredictionVector {
            entries: entries.to_vec(),
        }
    }

    #[test]
    fn top_k_tie_breaking() {
        let uniform = top_k(&[0.1; 10], 5).unwrap();
        assert_eq!(uniform.entries, (0..5).map(|c| (c, 0.1)).collect::<Vec<_>>());
        let mut one_hot = [0.0; 10];
        one_hot[7] = 1.0;
        let v = top_k(&one_hot, 5).unwrap();
        assert_eq!(v.entries, vec![(7, 1.0), (0, 0.0), (1, 0.0), (2, 0.0), (3, 0.0)]);
        let probs = [0.05, 0.3, 0.05, 0.2, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05];
        let full = top_k(&probs, 10).unwrap();
        assert!((full.entries.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(full.entries[0], (1, 0.3));
        assert!(top_k(&probs, 0).is_err());
        assert!(top_k(&probs, 11).is_err());
    }

    #[test]
    fn hand_computed_score() {
        let orig = pv(&[(1, 0.5), (2, 0.2), (3, 0.1), (4, 0.1), (5, 0.05)]);
        let den = pv(&[(1, 0.4), (2, 0.3), (3, 0.1), (4, 0.1), (6, 0.05)]);
        let s = fmd_score(&orig, &den, Norm::L1, Alignment::Union).unwrap();
        assert!((s - 0.06).abs() < 1e-12);
        assert_eq!(fmd_score(&orig, &orig, Norm::L1, Alignment::Union).unwrap(), 0.0);
        // orig-only drops class 6
        let s = fmd_score(&orig, &den, Norm::L1, Alignment::OrigOnly).unwrap();
        assert!((s - 0.05).abs() < 1e-12);
    }

    #[test]
    fn disjoint_sets_sum_everything() {
        let a = pv(&[(0, 0.6), (1, 0.3)]);
        let b = pv(&[(2, 0.5), (3, 0.4)]);
        let s = fmd_score(&a, &b, Norm::L1, Alignment::Union).unwrap();
        assert!((s - (0.9 + 0.9) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_k() {
        let a = pv(&[(0, 1.0)]);
        let b = pv(&[(0, 0.5), (1, 0.5)]);
        assert!(matches!(fmd_score(&a, &b, Norm::L1, Alignment::Union), Err(FmdError::MismatchedK(1, 2))));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.06), "0.06");
        assert_eq!(format_sig9(0.123456789123), "0.123456789");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.5e-7), "1.5e-7");
        assert_eq!(format_sig9(12.5), "12.5");
    }

    fn distribution(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }

    proptest! {
        #[test]
        fn score_symmetric_and_bounded(
            a in prop::collection::vec(0.001f64..1.0, 10),
            b in prop::collection::vec(0.001f64..1.0, 10),
            k in 1usize..=10,
            l2 in any::<bool>(),
        ) {
            let norm = if l2 { Norm::L2 } else { Norm::L1 };
            let pa = top_k(&distribution(&a), k).unwrap();
            let pb = top_k(&distribution(&b), k).unwrap();
            let ab = fmd_score(&pa, &pb, norm, Alignment::Union).unwrap();
            let ba = fmd_score(&pb, &pa, norm, Alignment::Union).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-15);
            let size = |v: &PredictionVector| match norm {
                Norm::L1 => v.entries.iter().map(|e| e.1).sum::<f64>(),
                Norm::L2 => v.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt(),
            };
            prop_assert!(ab <= (size(&pa) + size(&pb)) / k as f64 + 1e-12);
            prop_assert_eq!(fmd_score(&pa, &pa, norm, Alignment::Union).unwrap(), 0.0);
        }
    }
}
