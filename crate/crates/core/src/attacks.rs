//! Gradient-sign attacks: FGSM and BIM.

use serde::{Deserialize, Serialize};

use crate::error::{FmdError, Result};
use crate::image::Image;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Bim,
}

impl AttackMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Bim => "bim",
        }
    }
}

impl std::str::FromStr for AttackMethod {
    type Err = FmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgsm" => Ok(AttackMethod::Fgsm),
            "bim" => Ok(AttackMethod::Bim),
            other => Err(FmdError::config(format!("unknown attack method {other:?}"))),
        }
    }
}

/// L-infinity budget and BIM schedule. FGSM only reads `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub epsilon: f64,
    #[serde(default = "one")]
    pub iterations: usize,
    /// Per-iteration step; `None` means `epsilon`.
    #[serde(default)]
    pub step: Option<f64>,
}

fn one() -> usize {
    1
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            epsilon,
            iterations: 1,
            step: None,
        }
    }

    pub fn bim(epsilon: f64, step: f64, iterations: usize) -> Self {
        Self {
            epsilon,
            iterations,
            step: Some(step),
        }
    }

    pub fn step_size(&self) -> f64 {
        self.step.unwrap_or(self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(FmdError::config(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        let step = self.step_size();
        if !(step > 0.0 && step <= self.epsilon) {
            return Err(FmdError::config(format!("step {step} outside (0, epsilon]")));
        }
        if self.iterations == 0 {
            return Err(FmdError::config("iterations must be at least 1"));
        }
        Ok(())
    }
}

/// `sign` with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clip01(x + epsilon * sign(grad))`.
pub fn fgsm_step(img: &Image, grad: &[f64], epsilon: f64) -> Result<Image> {
    if grad.len() != img.data().len() {
        return Err(FmdError::shape(
            format!("{} gradient entries", img.data().len()),
            grad.len().to_string(),
        ));
    }
    let data = img
        .data()
        .iter()
        .zip(grad)
        .map(|(&x, &g)| x + epsilon * sign(g))
        .collect();
    let (h, w, c) = img.shape();
    Image::from_raw_clipped(h, w, c, data)
}

pub fn fgsm(params: &ModelParams, img: &Image, label: usize, cfg: &AttackConfig) -> Result<Image> {
    cfg.validate()?;
    let grad = params.input_gradient(img, label)?;
    fgsm_step(img, &grad, cfg.epsilon)
}

/// Iterated gradient-sign steps of size `cfg.step_size()`, each followed by
/// projection onto `[x - eps, x + eps]` and then onto `[0, 1]`.
pub fn bim(params: &ModelParams, img: &Image, label: usize, cfg: &AttackConfig) -> Result<Image> {
    cfg.validate()?;
    let (h, w, c) = img.shape();
    let eps = cfg.epsilon;
    let step = cfg.step_size();
    let origin = img.data();
    let mut current = img.clone();
    for _ in 0..cfg.iterations {
        let grad = params.input_gradient(&current, label)?;
        let data = current
            .data()
            .iter()
            .zip(&grad)
            .zip(origin)
            .map(|((&x, &g), &x0)| (x + step * sign(g)).max(x0 - eps).min(x0 + eps))
            .collect();
        current = Image::from_raw_clipped(h, w, c, data)?;
    }
    Ok(current)
}

pub fn attack(
    method: AttackMethod,
    params: &ModelParams,
    img: &Image,
    label: usize,
    cfg: &AttackConfig,
) -> Result<Image> {
    match method {
        AttackMethod::Fgsm => fgsm(params, img, label, cfg),
        AttackMethod::Bim => bim(params, img, label, cfg),
    }
}
