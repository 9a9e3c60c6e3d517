//! Classical detectors over the 1-D score: KNN, CART, random forest and an
//! RBF-kernel SVM, plus grid-search tuning and detection metrics.

mod forest;
mod knn;
mod metrics;
mod svm;
mod tree;
mod tune;

pub use forest::{rforest_fit, ForestModel};
pub use knn::{knn_fit, KnnModel};
pub use metrics::{evaluate, Metrics};
pub use svm::{rbf, smo_solve, svm_fit, SmoSolution, SupportVector, SvmModel, KKT_TOLERANCE};
pub use tree::{best_split, dtree_fit, gini, TreeModel, TreeNode};
pub use tune::{
    cv_accuracy, fit, select_best, stratified_folds, tune, Candidate, Hyper, Selection, TuneResult,
    DEFAULT_FOLDS,
};

use serde::{Deserialize, Serialize};

use crate::error::{FmdError, Result};
use crate::scoring::ScoreRecord;

/// A single training example: score and label (1 = adversarial).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub score: f64,
    pub label: u8,
}

impl From<&ScoreRecord> for Point {
    fn from(r: &ScoreRecord) -> Self {
        Point {
            score: r.score,
            label: r.label,
        }
    }
}

pub fn points_of(records: &[ScoreRecord]) -> Vec<Point> {
    records.iter().map(Point::from).collect()
}

/// Detector families, in the order used to break selection ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Knn,
    Dtree,
    Rforest,
    Svm,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Knn,
        DetectorKind::Dtree,
        DetectorKind::Rforest,
        DetectorKind::Svm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Knn => "knn",
            DetectorKind::Dtree => "dtree",
            DetectorKind::Rforest => "rforest",
            DetectorKind::Svm => "svm",
        }
    }

    /// The documented search grid for this family.
    pub fn default_grid(self) -> Vec<Hyper> {
        match self {
            DetectorKind::Knn => (1..=15).step_by(2).map(|k| Hyper::Knn { k }).collect(),
            DetectorKind::Dtree => (1..=5).map(|max_depth| Hyper::Dtree { max_depth }).collect(),
            DetectorKind::Rforest => [11, 51, 101]
                .into_iter()
                .flat_map(|n_trees| {
                    [2, 3, 5]
                        .into_iter()
                        .map(move |max_depth| Hyper::Rforest { n_trees, max_depth })
                })
                .collect(),
            DetectorKind::Svm => [0.1, 1.0, 10.0, 100.0]
                .into_iter()
                .flat_map(|c| {
                    [0.1, 1.0, 10.0, 100.0]
                        .into_iter()
                        .map(move |gamma| Hyper::Svm { c, gamma })
                })
                .collect(),
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = FmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(DetectorKind::Knn),
            "dtree" => Ok(DetectorKind::Dtree),
            "rforest" => Ok(DetectorKind::Rforest),
            "svm" => Ok(DetectorKind::Svm),
            other => Err(FmdError::config(format!("unknown classifier {other:?}"))),
        }
    }
}

/// A fitted detector. Serialized with a `kind` discriminator next to the
/// model's own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorModel {
    Knn(KnnModel),
    Dtree(TreeModel),
    Rforest(ForestModel),
    Svm(SvmModel),
}

impl DetectorModel {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorModel::Knn(_) => DetectorKind::Knn,
            DetectorModel::Dtree(_) => DetectorKind::Dtree,
            DetectorModel::Rforest(_) => DetectorKind::Rforest,
            DetectorModel::Svm(_) => DetectorKind::Svm,
        }
    }

    pub fn predict(&self, score: f64) -> u8 {
        match self {
            DetectorModel::Knn(m) => m.predict(score),
            DetectorModel::Dtree(m) => m.predict(score),
            DetectorModel::Rforest(m) => m.predict(score),
            DetectorModel::Svm(m) => m.predict(score),
        }
    }

    pub fn hyper(&self) -> Hyper {
        match self {
            DetectorModel::Knn(m) => Hyper::Knn { k: m.k },
            DetectorModel::Dtree(m) => Hyper::Dtree { max_depth: m.max_depth },
            DetectorModel::Rforest(m) => Hyper::Rforest {
                n_trees: m.n_trees,
                max_depth: m.max_depth,
            },
            DetectorModel::Svm(m) => Hyper::Svm { c: m.c, gamma: m.gamma },
        }
    }
}
