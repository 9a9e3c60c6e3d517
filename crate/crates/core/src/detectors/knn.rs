//! k-nearest-neighbour vote on the 1-D score.

use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{FmdError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Point>,
}

/// Stores the training set. `k` must be odd and at most the training size.
pub fn knn_fit(points: &[Point], k: usize) -> Result<KnnModel> {
    if points.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    if k == 0 || k % 2 == 0 {
        return Err(FmdError::config(format!("knn k must be odd, got {k}")));
    }
    if k > points.len() {
        return Err(FmdError::config(format!(
            "knn k = {k} exceeds training size {}",
            points.len()
        )));
    }
    Ok(KnnModel {
        k,
        points: points.to_vec(),
    })
}

impl KnnModel {
    /// Majority label among the `k` nearest scores; distance ties go to the
    /// earlier training point.
    pub fn predict(&self, score: f64) -> u8 {
        let mut ranked: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.score - score).abs(), i))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let ones = ranked[..self.k]
            .iter()
            .filter(|(_, i)| self.points[*i].label == 1)
            .count();
        u8::from(2 * ones > self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, u8)]) -> Vec<Point> {
        v.iter().map(|&(score, label)| Point { score, label }).collect()
    }

    #[test]
    fn nearest_point() {
        let m = knn_fit(&pts(&[(0.0, 0), (1.0, 1)]), 1).unwrap();
        assert_eq!(m.predict(0.2), 0);
        assert_eq!(m.predict(0.8), 1);
    }

    #[test]
    fn majority_of_three() {
        let m = knn_fit(&pts(&[(0.0, 0), (0.1, 0), (0.9, 1)]), 3).unwrap();
        assert_eq!(m.predict(0.5), 0);
        // k = n: constant majority predictor
        assert_eq!(m.predict(0.95), 0);
    }

    #[test]
    fn distance_tie_goes_to_earlier_point() {
        let m = knn_fit(&pts(&[(0.4, 1), (0.6, 0)]), 1).unwrap();
        assert_eq!(m.predict(0.5), 1);
        let m = knn_fit(&pts(&[(0.6, 0), (0.4, 1)]), 1).unwrap();
        assert_eq!(m.predict(0.5), 0);
    }

    #[test]
    fn fit_errors() {
        assert!(knn_fit(&[], 1).is_err());
        assert!(knn_fit(&pts(&[(0.0, 0), (1.0, 1)]), 2).is_err());
        assert!(knn_fit(&pts(&[(0.0, 0)]), 3).is_err());
    }
}
