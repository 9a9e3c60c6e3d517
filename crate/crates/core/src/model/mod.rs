//! Small convolutional classifier with exact backpropagation.
//!
//! Architecture (fixed): 32x32x3 input, conv 3x3x8 (pad 1) + ReLU + maxpool 2x2,
//! conv 3x3x16 (pad 1) + ReLU + maxpool 2x2, dense 1024->64 + ReLU, dense 64->10,
//! softmax. Parameters are stored as `f32`; activations and gradients are
//! computed in `f64`.

mod layers;
mod train;
mod weights;

pub use train::{accuracy, train, EpochLog, TrainConfig, TrainOutcome};
pub use weights::{load_weights, save_weights, WEIGHTS_MAGIC};

use crate::error::{FmdError, Result};
use crate::image::Image;
use crate::rng::SplitMix64;

use layers::{conv3x3_backward, conv3x3_forward, dense_backward, dense_forward, maxpool2_backward, maxpool2_forward};

pub const IMAGE_SIZE: usize = 32;
pub const INPUT_CHANNELS: usize = 3;
pub const NUM_CLASSES: usize = 10;

const C1: usize = 8;
const C2: usize = 16;
const HIDDEN: usize = 64;
const POOLED1: usize = IMAGE_SIZE / 2;
const POOLED2: usize = IMAGE_SIZE / 4;
const FLAT: usize = C2 * POOLED2 * POOLED2;

/// Floor applied to the true-class probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// A row-major 2-D block of `f32` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    fn he_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut SplitMix64) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| rng.uniform(-bound, bound) as f32)
            .collect();
        Self { rows, cols, values }
    }
}

/// Weights and biases for the reference architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub dense1_w: Tensor,
    pub dense1_b: Tensor,
    pub dense2_w: Tensor,
    pub dense2_b: Tensor,
}

/// Tensor shapes in serialization order.
pub const PARAM_SHAPES: [(usize, usize); 8] = [
    (C1, INPUT_CHANNELS * 9),
    (C1, 1),
    (C2, C1 * 9),
    (C2, 1),
    (HIDDEN, FLAT),
    (HIDDEN, 1),
    (NUM_CLASSES, HIDDEN),
    (NUM_CLASSES, 1),
];

impl ModelParams {
    pub fn zeros() -> Self {
        let t = |i: usize| Tensor::zeros(PARAM_SHAPES[i].0, PARAM_SHAPES[i].1);
        Self::from_tensors([t(0), t(1), t(2), t(3), t(4), t(5), t(6), t(7)])
    }

    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases. Weight
    /// tensors are drawn in serialization order, each in storage order.
    pub fn init(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let conv1_w = Tensor::he_uniform(C1, INPUT_CHANNELS * 9, INPUT_CHANNELS * 9, &mut rng);
        let conv2_w = Tensor::he_uniform(C2, C1 * 9, C1 * 9, &mut rng);
        let dense1_w = Tensor::he_uniform(HIDDEN, FLAT, FLAT, &mut rng);
        let dense2_w = Tensor::he_uniform(NUM_CLASSES, HIDDEN, HIDDEN, &mut rng);
        Self {
            conv1_w,
            conv1_b: Tensor::zeros(C1, 1),
            conv2_w,
            conv2_b: Tensor::zeros(C2, 1),
            dense1_w,
            dense1_b: Tensor::zeros(HIDDEN, 1),
            dense2_w,
            dense2_b: Tensor::zeros(NUM_CLASSES, 1),
        }
    }

    pub(crate) fn from_tensors(t: [Tensor; 8]) -> Self {
        let [conv1_w, conv1_b, conv2_w, conv2_b, dense1_w, dense1_b, dense2_w, dense2_b] = t;
        Self {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            dense1_w,
            dense1_b,
            dense2_w,
            dense2_b,
        }
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.dense1_w,
            &self.dense1_b,
            &self.dense2_w,
            &self.dense2_b,
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense1_w,
            &mut self.dense1_b,
            &mut self.dense2_w,
            &mut self.dense2_b,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.values.iter().all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.values.len()).sum()
    }

    /// Class probabilities for one image.
    pub fn forward(&self, img: &Image) -> Result<Vec<f64>> {
        let input = to_chw(img)?;
        Ok(self.run(&input).probs)
    }

    pub fn logits(&self, img: &Image) -> Result<Vec<f64>> {
        let input = to_chw(img)?;
        Ok(self.run(&input).logits)
    }

    /// Arg-max class, ties to the lowest class id.
    pub fn predict(&self, img: &Image) -> Result<usize> {
        Ok(argmax(&self.forward(img)?))
    }

    pub fn loss(&self, img: &Image, label: usize) -> Result<f64> {
        cross_entropy(&self.forward(img)?, label)
    }

    /// dJ/dpixel for the cross-entropy loss at `label`, laid out like `img.data()`.
    pub fn input_gradient(&self, img: &Image, label: usize) -> Result<Vec<f64>> {
        check_label(label)?;
        let input = to_chw(img)?;
        let act = self.run(&input);
        let grads = self.backward(&input, &act, label, GradTargets::Input);
        let dx = grads.input.expect("input gradient requested");
        // CHW back to interleaved HWC
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        let mut out = vec![0.0; plane * INPUT_CHANNELS];
        for c in 0..INPUT_CHANNELS {
            for i in 0..plane {
                out[i * INPUT_CHANNELS + c] = dx[c * plane + i];
            }
        }
        Ok(out)
    }

    fn run(&self, input: &[f64]) -> Activations {
        let z1 = conv3x3_forward(input, INPUT_CHANNELS, IMAGE_SIZE, IMAGE_SIZE, &self.conv1_w.values, &self.conv1_b.values, C1);
        let a1 = relu(&z1);
        let (p1, idx1) = maxpool2_forward(&a1, C1, IMAGE_SIZE, IMAGE_SIZE);
        let z2 = conv3x3_forward(&p1, C1, POOLED1, POOLED1, &self.conv2_w.values, &self.conv2_b.values, C2);
        let a2 = relu(&z2);
        let (flat, idx2) = maxpool2_forward(&a2, C2, POOLED1, POOLED1);
        let h = dense_forward(&flat, &self.dense1_w.values, &self.dense1_b.values, HIDDEN);
        let r = relu(&h);
        let logits = dense_forward(&r, &self.dense2_w.values, &self.dense2_b.values, NUM_CLASSES);
        let probs = softmax(&logits);
        Activations { z1, idx1, p1, z2, idx2, flat, h, r, logits, probs }
    }

    fn backward(&self, input: &[f64], act: &Activations, label: usize, targets: GradTargets) -> Gradients {
        let want_params = matches!(targets, GradTargets::Params);
        let mut dlogits = act.probs.clone();
        dlogits[label] -= 1.0;

        let (dr, dw4, db4) = dense_backward(&act.r, &dlogits, &self.dense2_w.values, HIDDEN, want_params);
        let dh = relu_backward(&act.h, dr);
        let (dflat, dw3, db3) = dense_backward(&act.flat, &dh, &self.dense1_w.values, FLAT, want_params);
        let da2 = maxpool2_backward(&dflat, &act.idx2, C2 * POOLED1 * POOLED1);
        let dz2 = relu_backward(&act.z2, da2);
        let (dp1, dw2, db2) = conv3x3_backward(&act.p1, &dz2, C1, POOLED1, POOLED1, &self.conv2_w.values, C2, true, want_params);
        let dp1 = dp1.expect("needed for layer 1");
        let da1 = maxpool2_backward(&dp1, &act.idx1, C1 * IMAGE_SIZE * IMAGE_SIZE);
        let dz1 = relu_backward(&act.z1, da1);
        let (dx, dw1, db1) = conv3x3_backward(
            input,
            &dz1,
            INPUT_CHANNELS,
            IMAGE_SIZE,
            IMAGE_SIZE,
            &self.conv1_w.values,
            C1,
            !want_params,
            want_params,
        );
        Gradients {
            input: dx,
            params: want_params.then(|| [dw1, db1, dw2, db2, dw3, db3, dw4, db4]),
            loss: -act.probs[label].max(PROB_FLOOR).ln(),
        }
    }

    /// Loss, correctness and parameter gradients for one sample (used by training).
    pub(crate) fn sample_gradients(&self, img: &Image, label: usize) -> Result<Gradients> {
        check_label(label)?;
        let input = to_chw(img)?;
        let act = self.run(&input);
        Ok(self.backward(&input, &act, label, GradTargets::Params))
    }
}

enum GradTargets {
    Input,
    Params,
}

pub(crate) struct Gradients {
    pub input: Option<Vec<f64>>,
    pub params: Option<[Vec<f64>; 8]>,
    pub loss: f64,
}

struct Activations {
    z1: Vec<f64>,
    idx1: Vec<usize>,
    p1: Vec<f64>,
    z2: Vec<f64>,
    idx2: Vec<usize>,
    flat: Vec<f64>,
    h: Vec<f64>,
    r: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

fn relu_backward(z: &[f64], mut grad: Vec<f64>) -> Vec<f64> {
    for (g, &v) in grad.iter_mut().zip(z) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

fn check_label(label: usize) -> Result<()> {
    if label >= NUM_CLASSES {
        return Err(FmdError::LabelOutOfRange {
            label,
            classes: NUM_CLASSES,
        });
    }
    Ok(())
}

fn to_chw(img: &Image) -> Result<Vec<f64>> {
    if img.shape() != (IMAGE_SIZE, IMAGE_SIZE, INPUT_CHANNELS) {
        return Err(FmdError::shape(
            format!("({IMAGE_SIZE}, {IMAGE_SIZE}, {INPUT_CHANNELS})"),
            format!("{:?}", img.shape()),
        ));
    }
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    let mut out = vec![0.0; plane * INPUT_CHANNELS];
    for (i, px) in img.data().chunks_exact(INPUT_CHANNELS).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            out[c * plane + i] = v;
        }
    }
    Ok(out)
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln(probs[label])` with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(FmdError::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    Ok(-probs[label].max(PROB_FLOOR).ln())
}
