//! CART classification tree on the 1-D score with Gini impurity.

use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{FmdError, Result};

/// Minimum impurity decrease counted as an improvement.
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        label: u8,
    },
    /// `score <= threshold` goes left.
    Split {
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub max_depth: usize,
    pub root: TreeNode,
}

/// `1 - p0^2 - p1^2`.
pub fn gini(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (n0 as f64 / n, n1 as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

/// Best threshold for a sorted slice: `(threshold, weighted gini)`. The
/// candidates are midpoints between consecutive distinct scores; the lowest
/// threshold wins ties.
pub fn best_split(sorted: &[Point]) -> Option<(f64, f64)> {
    let n = sorted.len();
    let total1 = sorted.iter().filter(|p| p.label == 1).count();
    let mut left1 = 0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n.saturating_sub(1) {
        left1 += usize::from(sorted[i].label == 1);
        if sorted[i].score == sorted[i + 1].score {
            continue;
        }
        let nl = i + 1;
        let nr = n - nl;
        let right1 = total1 - left1;
        let weighted = (nl as f64 * gini(nl - left1, left1) + nr as f64 * gini(nr - right1, right1)) / n as f64;
        if best.is_none_or(|(_, g)| weighted < g) {
            best = Some(((sorted[i].score + sorted[i + 1].score) / 2.0, weighted));
        }
    }
    best
}

fn majority(points: &[Point]) -> u8 {
    let ones = points.iter().filter(|p| p.label == 1).count();
    u8::from(2 * ones > points.len())
}

fn grow(sorted: &[Point], depth: usize, max_depth: usize) -> TreeNode {
    let ones = sorted.iter().filter(|p| p.label == 1).count();
    let parent = gini(sorted.len() - ones, ones);
    if ones == 0 || ones == sorted.len() || depth >= max_depth {
        return TreeNode::Leaf { label: majority(sorted) };
    }
    match best_split(sorted) {
        Some((threshold, weighted)) if weighted < parent - IMPROVEMENT_EPS => {
            let cut = sorted.partition_point(|p| p.score <= threshold);
            TreeNode::Split {
                threshold,
                left: Box::new(grow(&sorted[..cut], depth + 1, max_depth)),
                right: Box::new(grow(&sorted[cut..], depth + 1, max_depth)),
            }
        }
        _ => TreeNode::Leaf { label: majority(sorted) },
    }
}

pub fn dtree_fit(points: &[Point], max_depth: usize) -> Result<TreeModel> {
    if points.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(TreeModel {
        max_depth,
        root: grow(&sorted, 0, max_depth),
    })
}

impl TreeModel {
    pub fn predict(&self, score: f64) -> u8 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split { threshold, left, right } => {
                    node = if score <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}
