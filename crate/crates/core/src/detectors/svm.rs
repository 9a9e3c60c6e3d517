//! Soft-margin SVM with an RBF kernel, trained by SMO.
//!
//! Working-set selection follows the second-order rule of Fan, Chen and Lin
//! (the LIBSVM default); the solver stops once the maximal KKT violation
//! `m(alpha) - M(alpha)` falls below the tolerance.

use log::warn;
use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{FmdError, Result};

pub const KKT_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;

/// `exp(-gamma (a - b)^2)`.
pub fn rbf(a: f64, b: f64, gamma: f64) -> f64 {
    (-gamma * (a - b) * (a - b)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportVector {
    pub score: f64,
    pub alpha: f64,
    /// -1 (legitimate) or +1 (adversarial).
    pub y: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub c: f64,
    pub gamma: f64,
    pub bias: f64,
    pub support: Vec<SupportVector>,
    pub iterations: usize,
}

impl SvmModel {
    pub fn decision(&self, score: f64) -> f64 {
        self.support
            .iter()
            .map(|sv| sv.alpha * sv.y as f64 * rbf(sv.score, score, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Sign of the decision function; exactly 0 maps to label 1.
    pub fn predict(&self, score: f64) -> u8 {
        u8::from(self.decision(score) >= 0.0)
    }
}

/// Full dual solution, kept for inspection (box and equality constraints).
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

fn in_up(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha < c) || (y < 0.0 && alpha > 0.0)
}

fn in_low(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha > 0.0) || (y < 0.0 && alpha < c)
}

pub fn smo_solve(points: &[Point], c: f64, gamma: f64, tol: f64) -> Result<SmoSolution> {
    let n = points.len();
    let y: Vec<f64> = points.iter().map(|p| if p.label == 1 { 1.0 } else { -1.0 }).collect();
    let kernel: Vec<f64> = (0..n * n)
        .map(|ij| rbf(points[ij / n].score, points[ij % n].score, gamma))
        .collect();
    let k = |i: usize, j: usize| kernel[i * n + j];
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000_000);
    let mut iterations = 0;

    loop {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if in_up(alpha[t], y[t], c) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        // j: second-order choice in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if !in_low(alpha[t], y[t], c) {
                    continue;
                }
                let yg = y[t] * grad[t];
                gmax2 = gmax2.max(yg);
                let b = gmax + yg;
                if b > 0.0 {
                    let mut a = k(i, i) + k(t, t) - 2.0 * k(i, t);
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if gmax + gmax2 < tol {
            break;
        }
        if iterations >= max_iter {
            warn!("SMO hit the iteration cap ({max_iter}) before reaching tolerance");
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = k(i, i) + k(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k(i, i) + k(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // rho: mean of y G over free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(SmoSolution { alpha, y, rho, iterations })
}

/// Fits on labels mapped `0 -> -1`, `1 -> +1`. Both labels must be present.
pub fn svm_fit(points: &[Point], c: f64, gamma: f64) -> Result<SvmModel> {
    if points.is_empty() {
        return Err(FmdError::EmptyDataset);
    }
    if !(c > 0.0 && c.is_finite()) || !(gamma > 0.0 && gamma.is_finite()) {
        return Err(FmdError::config(format!("svm needs C > 0 and gamma > 0 (C = {c}, gamma = {gamma})")));
    }
    let ones = points.iter().filter(|p| p.label == 1).count();
    if ones == 0 || ones == points.len() {
        return Err(FmdError::InsufficientData("svm needs both labels".into()));
    }
    let sol = smo_solve(points, c, gamma, KKT_TOLERANCE)?;
    let support = points
        .iter()
        .zip(sol.alpha.iter().zip(&sol.y))
        .filter(|(_, (&a, _))| a > 0.0)
        .map(|(p, (&alpha, &y))| SupportVector {
            score: p.score,
            alpha,
            y: y as i8,
        })
        .collect();
    Ok(SvmModel {
        c,
        gamma,
        bias: -sol.rho,
        support,
        iterations: sol.iterations,
    })
}
