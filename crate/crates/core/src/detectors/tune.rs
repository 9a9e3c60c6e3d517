//! Stratified k-fold grid search and cross-family selection.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dtree_fit, knn_fit, rforest_fit, svm_fit, DetectorKind, DetectorModel, Point};
use crate::error::{FmdError, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_FOLDS: usize = 5;

/// One point of a search grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyper {
    Knn { k: usize },
    Dtree { max_depth: usize },
    Rforest { n_trees: usize, max_depth: usize },
    Svm { c: f64, gamma: f64 },
}

impl Hyper {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Hyper::Knn { .. } => DetectorKind::Knn,
            Hyper::Dtree { .. } => DetectorKind::Dtree,
            Hyper::Rforest { .. } => DetectorKind::Rforest,
            Hyper::Svm { .. } => DetectorKind::Svm,
        }
    }
}

impl std::fmt::Display for Hyper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hyper::Knn { k } => write!(f, "k={k}"),
            Hyper::Dtree { max_depth } => write!(f, "depth={max_depth}"),
            Hyper::Rforest { n_trees, max_depth } => write!(f, "trees={n_trees},depth={max_depth}"),
            Hyper::Svm { c, gamma } => write!(f, "C={c},gamma={gamma}"),
        }
    }
}

/// Fits one detector. The seed only matters for random forests.
pub fn fit(points: &[Point], hyper: &Hyper, seed: u64) -> Result<DetectorModel> {
    Ok(match *hyper {
        Hyper::Knn { k } => DetectorModel::Knn(knn_fit(points, k)?),
        Hyper::Dtree { max_depth } => DetectorModel::Dtree(dtree_fit(points, max_depth)?),
        Hyper::Rforest { n_trees, max_depth } => {
            DetectorModel::Rforest(rforest_fit(points, n_trees, max_depth, seed, true)?)
        }
        Hyper::Svm { c, gamma } => DetectorModel::Svm(svm_fit(points, c, gamma)?),
    })
}

/// Fold index per point. Each label's points are shuffled and dealt
/// round-robin, so with `folds <= min class count` every fold sees both
/// labels. `folds` is lowered to the smallest class count when needed.
pub fn stratified_folds(points: &[Point], folds: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    if folds < 2 {
        return Err(FmdError::config(format!("need at least 2 folds, got {folds}")));
    }
    let by_label: [Vec<usize>; 2] = [0u8, 1].map(|l| (0..points.len()).filter(|&i| points[i].label == l).collect());
    let smallest = by_label[0].len().min(by_label[1].len());
    if smallest < 2 {
        return Err(FmdError::InsufficientData(format!(
            "cross-validation needs two examples of each label (smallest class has {smallest})"
        )));
    }
    let folds = if smallest < folds {
        warn!("reducing cross-validation folds from {folds} to {smallest}");
        smallest
    } else {
        folds
    };
    let mut rng = SplitMix64::new(seed);
    let mut assignment = vec![0; points.len()];
    for mut idx in by_label {
        rng.shuffle(&mut idx);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok((assignment, folds))
}

/// Pooled accuracy over all held-out folds. Any fold that cannot be fit
/// makes the entry invalid (`Err`).
pub fn cv_accuracy(points: &[Point], assignment: &[usize], folds: usize, hyper: &Hyper, seed: u64) -> Result<f64> {
    let mut correct = 0usize;
    for f in 0..folds {
        let train: Vec<Point> = points
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a != f)
            .map(|(p, _)| *p)
            .collect();
        let model = fit(&train, hyper, SplitMix64::derive(seed, f as u64).next_u64())?;
        correct += points
            .iter()
            .zip(assignment)
            .filter(|(p, &a)| a == f && model.predict(p.score) == p.label)
            .count();
    }
    Ok(correct as f64 / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub hyper: Hyper,
    /// `None` when the entry could not be fit on some fold (e.g. k too large).
    pub cv_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: Hyper,
    pub cv_accuracy: f64,
    pub folds: usize,
    pub candidates: Vec<Candidate>,
}

/// Grid search by stratified CV. Highest accuracy wins; ties go to the
/// earlier grid entry. Entries that fail to fit are skipped.
pub fn tune(points: &[Point], grid: &[Hyper], folds: usize, seed: u64) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(FmdError::config("empty hyperparameter grid"));
    }
    let (assignment, folds) = stratified_folds(points, folds, seed)?;
    let candidates: Vec<Candidate> = grid
        .par_iter()
        .map(|hyper| Candidate {
            hyper: *hyper,
            cv_accuracy: cv_accuracy(points, &assignment, folds, hyper, seed).ok(),
        })
        .collect();
    let mut best: Option<(Hyper, f64)> = None;
    for c in &candidates {
        if let Some(acc) = c.cv_accuracy {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((c.hyper, acc));
            }
        }
    }
    let (best, cv_accuracy) =
        best.ok_or_else(|| FmdError::InsufficientData("no grid entry could be fit".into()))?;
    Ok(TuneResult {
        best,
        cv_accuracy,
        folds,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub kind: DetectorKind,
    pub tuning: TuneResult,
    /// Every family that was tuned, in tie-break order.
    pub per_kind: Vec<(DetectorKind, TuneResult)>,
}

/// Tunes each family on its default grid and keeps the one with the best
/// CV accuracy; ties follow the order of `kinds`.
pub fn select_best(points: &[Point], kinds: &[DetectorKind], folds: usize, seed: u64) -> Result<Selection> {
    let per_kind = kinds
        .iter()
        .map(|&k| Ok((k, tune(points, &k.default_grid(), folds, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<&(DetectorKind, TuneResult)> = None;
    for entry in &per_kind {
        if best.is_none_or(|b| entry.1.cv_accuracy > b.1.cv_accuracy) {
            best = Some(entry);
        }
    }
    let (kind, tuning) = best.ok_or_else(|| FmdError::config("no classifier families given"))?.clone();
    Ok(Selection { kind, tuning, per_kind })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(n: usize, seed: u64, spread: f64) -> Vec<Point> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                Point {
                    score: 0.3 + 0.3 * label as f64 + spread * rng.next_gaussian(),
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn folds_are_stratified() {
        let pts = noisy(53, 1, 0.1);
        let (a, folds) = stratified_folds(&pts, 5, 9).unwrap();
        assert_eq!(folds, 5);
        for f in 0..folds {
            for l in [0, 1] {
                let n = pts.iter().zip(&a).filter(|(p, &x)| x == f && p.label == l).count();
                assert!((5..=6).contains(&n), "fold {f} label {l}: {n}");
            }
        }
    }

    #[test]
    fn folds_shrink_to_smallest_class() {
        let mut pts = noisy(20, 2, 0.1);
        pts.retain(|p| p.label == 0);
        pts.extend([0.7, 0.8, 0.9].map(|score| Point { score, label: 1 }));
        assert_eq!(stratified_folds(&pts, 5, 0).unwrap().1, 3);
        pts.truncate(pts.len() - 2);
        assert!(matches!(stratified_folds(&pts, 5, 0), Err(FmdError::InsufficientData(_))));
    }

    #[test]
    fn single_entry_grid_returns_it() {
        let pts = noisy(40, 3, 0.2);
        let grid = [Hyper::Dtree { max_depth: 3 }];
        assert_eq!(tune(&pts, &grid, 5, 0).unwrap().best, grid[0]);
    }

    #[test]
    fn separable_scores_reach_full_accuracy() {
        let pts: Vec<Point> = (0..40)
            .map(|i| Point {
                score: if i % 2 == 0 { 0.1 + i as f64 * 0.001 } else { 0.8 + i as f64 * 0.001 },
                label: (i % 2) as u8,
            })
            .collect();
        for kind in DetectorKind::ALL {
            let r = tune(&pts, &kind.default_grid(), 5, 11).unwrap();
            assert_eq!(r.cv_accuracy, 1.0, "{kind}");
        }
    }

    #[test]
    fn ties_go_to_first_entry() {
        let pts: Vec<Point> = (0..20)
            .map(|i| Point { score: i as f64, label: u8::from(i >= 10) })
            .collect();
        let grid: Vec<Hyper> = (1..=5).map(|max_depth| Hyper::Dtree { max_depth }).collect();
        assert_eq!(tune(&pts, &grid, 4, 0).unwrap().best, Hyper::Dtree { max_depth: 1 });
        let sel = select_best(&pts, &DetectorKind::ALL, 4, 0).unwrap();
        assert_eq!(sel.kind, DetectorKind::Knn);
    }

    #[test]
    fn invalid_entries_are_skipped() {
        let pts = noisy(10, 4, 0.05);
        // k = 15 exceeds every training fold
        let r = tune(&pts, &[Hyper::Knn { k: 15 }, Hyper::Knn { k: 3 }], 2, 0).unwrap();
        assert_eq!(r.best, Hyper::Knn { k: 3 });
        assert_eq!(r.candidates[0].cv_accuracy, None);
        assert!(tune(&pts, &[Hyper::Knn { k: 15 }], 2, 0).is_err());
    }

    #[test]
    fn tuning_is_deterministic() {
        let pts = noisy(80, 5, 0.15);
        let a = select_best(&pts, &DetectorKind::ALL, 5, 21).unwrap();
        let b = select_best(&pts, &DetectorKind::ALL, 5, 21).unwrap();
        assert_eq!(a, b);
    }
}
