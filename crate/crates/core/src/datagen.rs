//! Deterministic synthetic 10-class shape dataset and stratified splitting.
//!
//! Draw order per image (one SplitMix64 stream for the whole dataset, images
//! generated class by class): background RGB (3 uniforms in [0, 0.4]),
//! foreground RGB (3 uniforms in [0.6, 1.0]), center jitter dx then dy
//! (integers in [-4, 4]), size scale (uniform in [0.8, 1.2]), then one
//! Gaussian per stored value in row-major, channel-interleaved order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FmdError, Result};
use crate::image::Image;
use crate::rng::SplitMix64;

pub const NUM_SHAPES: usize = 10;

pub const SHAPE_NAMES: [&str; NUM_SHAPES] = [
    "filled circle",
    "hollow circle",
    "filled square",
    "hollow square",
    "filled triangle",
    "plus sign",
    "horizontal stripes",
    "vertical stripes",
    "diagonal line",
    "checkerboard",
];

const BASE_HALF_EXTENT: f64 = 6.0;
const STROKE: f64 = 1.5;
const STRIPE_WIDTH: f64 = 3.0;
const CHECKER_CELL: f64 = 4.0;
const LINE_HALF_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub seed: u64,
    pub per_class: usize,
    pub image_size: usize,
    pub noise_sigma: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            per_class: 100,
            image_size: 32,
            noise_sigma: 0.02,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 {
            return Err(FmdError::config("per_class must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(FmdError::config("noise_sigma must be a finite value >= 0"));
        }
        if self.image_size < 8 {
            return Err(FmdError::config("image_size must be at least 8"));
        }
        Ok(())
    }
}

/// Membership test for shape `label` at offset `(u, v)` from the center
/// (v grows downward), half-extent `s`.
fn inside(label: usize, u: f64, v: f64, s: f64) -> bool {
    let box_half = 0.85 * s;
    let in_box = u.abs() <= box_half && v.abs() <= box_half;
    match label {
        0 => u * u + v * v <= s * s,
        1 => {
            let r2 = u * u + v * v;
            r2 <= s * s && r2 >= (s - STROKE).powi(2)
        }
        2 => in_box,
        3 => in_box && u.abs().max(v.abs()) > box_half - STROKE,
        4 => {
            let base = 0.8 * s;
            v >= -s && v <= base && u.abs() <= (v + s) / (base + s) * s
        }
        5 => (u.abs() <= LINE_HALF_WIDTH && v.abs() <= s) || (v.abs() <= LINE_HALF_WIDTH && u.abs() <= s),
        6 => in_box && ((v + box_half) / STRIPE_WIDTH).floor() as i64 % 2 == 0,
        7 => in_box && ((u + box_half) / STRIPE_WIDTH).floor() as i64 % 2 == 0,
        8 => u.abs() <= s && v.abs() <= s && (u - v).abs() / std::f64::consts::SQRT_2 <= LINE_HALF_WIDTH,
        9 => {
            let cu = ((u + box_half) / CHECKER_CELL).floor() as i64;
            let cv = ((v + box_half) / CHECKER_CELL).floor() as i64;
            in_box && (cu + cv) % 2 == 0
        }
        _ => unreachable!("shape label {label}"),
    }
}

fn render(label: usize, size: usize, rng: &mut SplitMix64, noise_sigma: f64) -> Image {
    let bg: [f64; 3] = std::array::from_fn(|_| rng.uniform(0.0, 0.4));
    let fg: [f64; 3] = std::array::from_fn(|_| rng.uniform(0.6, 1.0));
    let dx = rng.range_inclusive(-4, 4) as f64;
    let dy = rng.range_inclusive(-4, 4) as f64;
    let s = BASE_HALF_EXTENT * rng.uniform(0.8, 1.2);
    let (cx, cy) = (size as f64 / 2.0 + dx, size as f64 / 2.0 + dy);

    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let color = if inside(label, u, v, s) { &fg } else { &bg };
            data.extend_from_slice(color);
        }
    }
    for value in &mut data {
        *value += noise_sigma * rng.next_gaussian();
    }
    Image::from_raw_clipped(size, size, 3, data).expect("valid generated shape")
}

/// `per_class` images of each class, ordered by class then index.
pub fn generate(spec: &DatasetSpec) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut out = Vec::with_capacity(spec.per_class * NUM_SHAPES);
    for label in 0..NUM_SHAPES {
        for _ in 0..spec.per_class {
            let image = render(label, spec.image_size, &mut rng, spec.noise_sigma);
            out.push(LabeledImage { image, label });
        }
    }
    Ok(out)
}

/// Stratified split: within each key group (visited in ascending key order)
/// the items are shuffled and the first `round(n * ratio)` go to the first
/// half, clamped so both halves get at least one. Both halves keep the input order.
pub fn stratified_split<T: Clone>(
    items: &[T],
    key: impl Fn(&T) -> usize,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(FmdError::config(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        groups.entry(key(item)).or_default().push(i);
    }
    let mut rng = SplitMix64::new(seed);
    let mut in_first = vec![false; items.len()];
    for (k, mut idx) in groups {
        if idx.len() < 2 {
            return Err(FmdError::InsufficientData(format!(
                "group {k} has {} item(s); both halves need one",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let n_first = ((idx.len() as f64 * ratio).round() as usize).clamp(1, idx.len() - 1);
        for &i in &idx[..n_first] {
            in_first[i] = true;
        }
    }
    let (first, second): (Vec<_>, Vec<_>) = items
        .iter()
        .zip(&in_first)
        .partition(|(_, &f)| f);
    Ok((
        first.into_iter().map(|(t, _)| t.clone()).collect(),
        second.into_iter().map(|(t, _)| t.clone()).collect(),
    ))
}

pub fn split(dataset: &[LabeledImage], ratio: f64, seed: u64) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    stratified_split(dataset, |s| s.label, ratio, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, per_class: usize) -> DatasetSpec {
        DatasetSpec {
            seed,
            per_class,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn deterministic_and_counted() {
        let a = generate(&small(42, 100)).unwrap();
        let b = generate(&small(42, 100)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        for label in 0..NUM_SHAPES {
            assert_eq!(a.iter().filter(|s| s.label == label).count(), 100);
        }
        assert!(a.iter().all(|s| s.image.shape() == (32, 32, 3)));
        assert!(a.iter().all(|s| s.image.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn noiseless_images_are_bimodal() {
        let data = generate(&DatasetSpec {
            noise_sigma: 0.0,
            ..small(9, 5)
        })
        .unwrap();
        for s in &data {
            let (lo, hi): (Vec<f64>, Vec<f64>) = s.image.data().iter().partition(|&&v| v <= 0.4);
            assert!(!lo.is_empty() && !hi.is_empty(), "class {} lacks a mode", s.label);
            assert!(hi.iter().all(|&v| v >= 0.6));
        }
    }

    #[test]
    fn classes_are_distinct_shapes() {
        let data = generate(&DatasetSpec {
            noise_sigma: 0.0,
            ..small(1, 1)
        })
        .unwrap();
        let masks: Vec<Vec<bool>> = data
            .iter()
            .map(|s| s.image.plane(0).iter().map(|&v| v >= 0.6).collect())
            .collect();
        for i in 0..NUM_SHAPES {
            for j in i + 1..NUM_SHAPES {
                assert_ne!(masks[i], masks[j], "classes {i} and {j} render identically");
            }
        }
    }

    #[test]
    fn split_half_is_stratified_partition() {
        let data = generate(&small(42, 100)).unwrap();
        let (train, test) = split(&data, 0.5, 7).unwrap();
        assert_eq!((train.len(), test.len()), (500, 500));
        for label in 0..NUM_SHAPES {
            assert_eq!(train.iter().filter(|s| s.label == label).count(), 50);
            assert_eq!(test.iter().filter(|s| s.label == label).count(), 50);
        }
        // partition: every item lands in exactly one half
        let in_train = data.iter().filter(|d| train.contains(d)).count();
        let in_test = data.iter().filter(|d| test.contains(d)).count();
        assert_eq!(in_train + in_test, data.len());
        assert!(train.iter().all(|t| !test.contains(t)));
        let (train2, _) = split(&data, 0.5, 7).unwrap();
        assert_eq!(train, train2);
        let (train3, _) = split(&data, 0.5, 8).unwrap();
        assert_ne!(train, train3);
    }

    #[test]
    fn split_errors() {
        let items = vec![1usize, 2, 3];
        assert!(stratified_split(&items, |&x| x, 0.5, 0).is_err());
        assert!(stratified_split(&items, |_| 0, 1.0, 0).is_err());
        let (a, b) = stratified_split(&items, |_| 0, 0.01, 0).unwrap();
        assert_eq!((a.len(), b.len()), (1, 2));
    }
}
