//! Bagged CART trees with majority vote.

use serde::{Deserialize, Serialize};

use super::tree::{dtree_fit, TreeModel};
use super::Point;
use crate::error::{FmdError, Result};
use crate::rng::SplitMix64;

const MAX_REDRAWS: usize = 1000;

fn has_both_labels(points: &[Point]) -> bool {
    points.iter().any(|p| p.label == 0) && points.iter().any(|p| p.label == 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub bootstrap: bool,
    pub trees: Vec<TreeModel>,
}

/// Tree `t` is fit on a bootstrap resample drawn from `SplitMix64::derive(seed, t)`
/// (or on the full set when `bootstrap` is off). A resample that lost one of
/// the labels present in `points` is redrawn from the same stream.
pub fn rforest_fit(
    points: &[Point],
    n_trees: usize,
    max_depth: usize,
    seed: u64,
    bootstrap: bool,
) -> Result<ForestModel> {
    if points.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    if n_trees == 0 {
        return Err(FmdError::config("n_trees must be at least 1"));
    }
    let n = points.len();
    let both_labels = has_both_labels(points);
    let trees = (0..n_trees)
        .map(|t| {
            if bootstrap {
                let mut rng = SplitMix64::derive(seed, t as u64);
                let mut sample: Vec<Point>;
                let mut attempts = 0;
                loop {
                    sample = (0..n).map(|_| points[rng.below(n as u64) as usize]).collect();
                    attempts += 1;
                    if !both_labels || has_both_labels(&sample) || attempts >= MAX_REDRAWS {
                        break;
                    }
                }
                dtree_fit(&sample, max_depth)
            } else {
                dtree_fit(points, max_depth)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        n_trees,
        max_depth,
        seed,
        bootstrap,
        trees,
    })
}

impl ForestModel {
    /// Majority vote; an even split goes to label 0.
    pub fn predict(&self, score: f64) -> u8 {
        let ones = self.trees.iter().filter(|t| t.predict(score) == 1).count();
        u8::from(2 * ones > self.trees.len())
    }
}
