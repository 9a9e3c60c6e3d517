//! 2-D discrete Fourier transform on row-major grids.
//!
//! `F[u, v] = sum_{m, n} f[m, n] exp(-2 pi i (u m / M + v n / N))`; the inverse
//! carries the `1 / (M N)` factor. Row and column passes use `rustfft`, which
//! handles arbitrary (non power of two) lengths.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

fn transform(mut data: Array2<Complex64>, direction: FftDirection) -> Array2<Complex64> {
    let mut planner = FftPlanner::new();
    for axis in [Axis(1), Axis(0)] {
        let len = data.len_of(axis);
        let fft = planner.plan_fft(len, direction);
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for mut lane in data.lanes_mut(axis) {
            for (b, v) in buf.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            fft.process(&mut buf);
            for (v, b) in lane.iter_mut().zip(&buf) {
                *v = *b;
            }
        }
    }
    data
}

pub fn fft2(input: &Array2<f64>) -> Array2<Complex64> {
    fft2_complex(&input.mapv(|v| Complex64::new(v, 0.0)))
}

pub fn fft2_complex(input: &Array2<Complex64>) -> Array2<Complex64> {
    transform(input.clone(), FftDirection::Forward)
}

/// Inverse transform, normalized so that `ifft2(fft2(f)) == f`.
pub fn ifft2(input: &Array2<Complex64>) -> Array2<Complex64> {
    let scale = 1.0 / input.len() as f64;
    transform(input.clone(), FftDirection::Inverse).mapv(|v| v * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use std::f64::consts::TAU;

    /// Textbook double sum.
    fn naive_dft(f: &Array2<f64>) -> Array2<Complex64> {
        let (m, n) = f.dim();
        Array2::from_shape_fn((m, n), |(u, v)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..m {
                for b in 0..n {
                    let phase = -TAU * ((u * a) as f64 / m as f64 + (v * b) as f64 / n as f64);
                    acc += f[[a, b]] * Complex64::from_polar(1.0, phase);
                }
            }
            acc
        })
    }

    fn random(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = SplitMix64::new(seed);
        Array2::from_shape_fn((m, n), |_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn constant_has_only_dc() {
        let f = Array2::from_elem((6, 10), 0.7);
        let spec = fft2(&f);
        for ((u, v), c) in spec.indexed_iter() {
            if (u, v) == (0, 0) {
                assert!((c.re - 0.7 * 60.0).abs() < 1e-9 && c.im.abs() < 1e-9);
            } else {
                assert!(c.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn matches_naive_dft() {
        for (m, n, seed) in [(8, 8, 1), (8, 8, 2), (5, 7, 3), (1, 9, 4)] {
            let f = random(m, n, seed);
            let fast = fft2(&f);
            let slow = naive_dft(&f);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).norm() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        for (m, n, seed) in [(8, 8, 5), (12, 7, 6), (32, 32, 7)] {
            let f = random(m, n, seed);
            let spec = fft2(&f);
            let back = ifft2(&spec);
            for (a, b) in back.iter().zip(f.iter()) {
                assert!((a.re - b).abs() < 1e-9 && a.im.abs() < 1e-9);
            }
            let energy: f64 = f.iter().map(|v| v * v).sum();
            let spec_energy: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / (m * n) as f64;
            assert!((energy - spec_energy).abs() <= 1e-9 * energy);
        }
    }
}
